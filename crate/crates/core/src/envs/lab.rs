//! ToyLab: multi-step science procedures with ordered subgoals.
//!
//! Eight task types, each performed in one of two locations whose heating and
//! cooling devices differ. The reward is the fraction of the ordered subgoal
//! list completed; a `focus` action ends the episode.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Parsed, Transition};
use crate::trajectory::Split;

pub const TASKS: [&str; 8] = [
    "boil", "freeze", "melt", "weigh", "mix", "conduct", "dissolve", "grow",
];
pub const LOCATIONS: [&str; 2] = ["kitchen", "workshop"];
pub const CONTAINERS: [&str; 3] = ["drawer", "shelf", "cabinet"];
pub const SEEN_OBJECTS: [&str; 6] = ["water", "ice", "wax", "salt", "sugar", "iron"];
pub const UNSEEN_OBJECTS: [&str; 4] = ["lead", "tin", "zinc", "mercury"];
const HEAT: [&str; 2] = ["stove", "burner"];
const COLD: [&str; 2] = ["fridge", "cooler"];
pub const COMMANDS: [&str; 13] = [
    "look", "open", "go", "take", "put", "activate", "wait", "measure", "read", "focus", "add",
    "stir", "connect",
];
const PROPS: [&str; 15] = [
    "door", "sample", "pot", "tray", "pan", "scale", "beaker", "cup", "thermometer", "battery",
    "bulb", "switch", "liquid", "soil", "lamp",
];
const OBS_WORDS: [&str; 8] = ["hall", "closed", "ok", "holding", "in", "empty", "nothing", "happened"];

pub fn words() -> Vec<&'static str> {
    let mut w = Vec::new();
    w.extend(COMMANDS);
    w.extend(TASKS);
    w.extend(LOCATIONS);
    w.extend(CONTAINERS);
    w.extend(SEEN_OBJECTS);
    w.extend(UNSEEN_OBJECTS);
    w.extend(HEAT);
    w.extend(COLD);
    w.extend(PROPS);
    w.extend(OBS_WORDS);
    w
}

/// Task-specific procedure performed after the sample is in hand.
/// `HEAT` and `COLD` stand for the location's devices.
fn tail_template(task: usize) -> &'static [&'static [&'static str]] {
    match task {
        0 => &[
            &["put", "sample", "pot"],
            &["activate", "HEAT"],
            &["wait"],
            &["wait"],
            &["measure", "thermometer"],
            &["focus", "sample"],
        ],
        1 => &[
            &["put", "sample", "tray"],
            &["put", "tray", "COLD"],
            &["wait"],
            &["wait"],
            &["measure", "thermometer"],
            &["focus", "sample"],
        ],
        2 => &[
            &["put", "sample", "pan"],
            &["activate", "HEAT"],
            &["wait"],
            &["measure", "thermometer"],
            &["focus", "sample"],
        ],
        3 => &[
            &["activate", "scale"],
            &["put", "sample", "scale"],
            &["wait"],
            &["read", "scale"],
            &["focus", "sample"],
        ],
        4 => &[
            &["put", "sample", "beaker"],
            &["add", "liquid", "beaker"],
            &["stir", "beaker"],
            &["wait"],
            &["focus", "beaker"],
        ],
        5 => &[
            &["connect", "sample", "battery"],
            &["connect", "sample", "bulb"],
            &["activate", "switch"],
            &["look"],
            &["focus", "bulb"],
        ],
        6 => &[
            &["put", "sample", "cup"],
            &["add", "liquid", "cup"],
            &["stir", "cup"],
            &["wait"],
            &["wait"],
            &["focus", "cup"],
        ],
        7 => &[
            &["put", "sample", "pot"],
            &["add", "soil", "pot"],
            &["add", "liquid", "pot"],
            &["activate", "lamp"],
            &["wait"],
            &["wait"],
            &["focus", "pot"],
        ],
        _ => unreachable!("task index out of range"),
    }
}

fn resolve(words: &[&'static str], location: usize) -> Vec<&'static str> {
    words
        .iter()
        .map(|&w| match w {
            "HEAT" => HEAT[location],
            "COLD" => COLD[location],
            w => w,
        })
        .collect()
}

/// Every action that is meaningful at `location` once the sample is held.
fn procedure_actions(location: usize) -> &'static [Vec<&'static str>] {
    use std::sync::OnceLock;
    static CACHE: [OnceLock<Vec<Vec<&'static str>>>; 2] = [OnceLock::new(), OnceLock::new()];
    CACHE[location].get_or_init(|| {
        let mut all: Vec<Vec<&'static str>> = Vec::new();
        for task in 0..TASKS.len() {
            for a in tail_template(task) {
                let a = resolve(a, location);
                if !all.contains(&a) {
                    all.push(a);
                }
            }
        }
        all
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabGoal {
    pub task: usize,
    pub object: &'static str,
    pub location: usize,
    pub container: usize,
}

impl LabGoal {
    /// The ordered subgoal actions.
    pub fn subgoals(&self) -> Vec<Vec<&'static str>> {
        let mut sg = vec![vec!["go", LOCATIONS[self.location]], vec!["take", "sample"]];
        sg.extend(
            tail_template(self.task)
                .iter()
                .map(|a| resolve(a, self.location)),
        );
        sg
    }
}

pub fn generate(split: Split, rng: &mut ChaCha8Rng) -> (Vec<&'static str>, LabGoal) {
    let objects: &[&'static str] = match split {
        Split::Seen => &SEEN_OBJECTS,
        Split::Unseen => &UNSEEN_OBJECTS,
    };
    let goal = LabGoal {
        task: rng.random_range(0..TASKS.len()),
        object: objects[rng.random_range(0..objects.len())],
        location: rng.random_range(0..LOCATIONS.len()),
        container: rng.random_range(0..CONTAINERS.len()),
    };
    let words = vec![TASKS[goal.task], goal.object, LOCATIONS[goal.location]];
    (words, goal)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabWorld {
    /// `None` is the hall, otherwise a location index.
    pub room: Option<usize>,
    pub door_open: bool,
    pub container_open: bool,
    pub holding: bool,
    pub achieved: usize,
    pub subgoals: Vec<Vec<&'static str>>,
}

impl LabWorld {
    fn room_word(&self) -> &'static str {
        self.room.map_or("hall", |r| LOCATIONS[r])
    }
}

pub fn reset(goal: &LabGoal) -> (LabWorld, Vec<&'static str>) {
    (
        LabWorld {
            room: None,
            door_open: false,
            container_open: false,
            holding: false,
            achieved: 0,
            subgoals: goal.subgoals(),
        },
        vec!["hall", "door", "closed"],
    )
}

pub fn step(world: &mut LabWorld, goal: &LabGoal, cmd: &Parsed) -> Transition {
    let out = transition(world, goal, cmd);
    if !out.invalid && world.achieved < world.subgoals.len() {
        let next = &world.subgoals[world.achieved];
        if next.len() == cmd.args.len() + 1
            && next[0] == cmd.command
            && next[1..].iter().zip(&cmd.args).all(|(a, b)| a == b)
        {
            world.achieved += 1;
        }
    }
    out
}

fn transition(world: &mut LabWorld, goal: &LabGoal, cmd: &Parsed) -> Transition {
    let room = world.room_word();
    match (cmd.command, cmd.args.as_slice()) {
        ("look", []) => match world.room {
            None => Transition::observe(vec![
                "hall",
                "door",
                if world.door_open { "open" } else { "closed" },
            ]),
            Some(r) if r == goal.location && !world.holding => {
                Transition::observe(vec![room, goal.object, "in", CONTAINERS[goal.container]])
            }
            Some(_) if world.holding => Transition::observe(vec![room, "ok"]),
            Some(_) => Transition::observe(vec![room, "empty"]),
        },
        ("open", ["door"]) if world.room.is_none() => {
            world.door_open = true;
            Transition::observe(vec!["hall", "door", "open"])
        }
        ("open", [c]) if world.room.is_some() => match CONTAINERS.iter().position(|x| x == c) {
            Some(ci) => {
                if world.room == Some(goal.location) && ci == goal.container {
                    world.container_open = true;
                }
                Transition::observe(vec![room, CONTAINERS[ci], "open"])
            }
            None => Transition::invalid(),
        },
        ("go", ["hall"]) if world.room.is_some() => {
            world.room = None;
            Transition::observe(vec!["hall"])
        }
        ("go", [dest]) if world.room.is_none() && world.door_open => {
            match LOCATIONS.iter().position(|x| x == dest) {
                Some(l) => {
                    world.room = Some(l);
                    Transition::observe(vec![LOCATIONS[l]])
                }
                None => Transition::invalid(),
            }
        }
        ("take", ["sample"])
            if world.room == Some(goal.location) && world.container_open && !world.holding =>
        {
            world.holding = true;
            Transition::observe(vec![room, "holding", "sample"])
        }
        _ => {
            let Some(loc) = world.room else {
                return Transition::invalid();
            };
            if !world.holding {
                return Transition::invalid();
            }
            let mut full = vec![cmd.command];
            full.extend(cmd.args.iter().copied());
            if !procedure_actions(loc).contains(&full) {
                return Transition::invalid();
            }
            if cmd.command == "focus" {
                Transition::terminal(vec![room, "ok"])
            } else {
                Transition::observe(vec![room, "ok"])
            }
        }
    }
}

pub fn progress(world: &LabWorld) -> f64 {
    world.achieved as f64 / world.subgoals.len() as f64
}

pub fn success(world: &LabWorld) -> bool {
    world.achieved == world.subgoals.len()
}

pub fn expert_plan(goal: &LabGoal) -> Vec<Vec<&'static str>> {
    let mut plan: Vec<Vec<&'static str>> = vec![
        vec!["look"],
        vec!["open", "door"],
        vec!["go", LOCATIONS[goal.location]],
        vec!["look"],
        vec!["open", CONTAINERS[goal.container]],
        vec!["take", "sample"],
    ];
    plan.extend(
        tail_template(goal.task)
            .iter()
            .map(|a| resolve(a, goal.location)),
    );
    let rationale = TASKS[goal.task];
    plan.into_iter()
        .map(|a| std::iter::once(rationale).chain(a).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subgoal_lists_have_go_and_take_first() {
        for task in 0..TASKS.len() {
            let g = LabGoal {
                task,
                object: "water",
                location: 1,
                container: 0,
            };
            let sg = g.subgoals();
            assert_eq!(sg[0], vec!["go", "workshop"]);
            assert_eq!(sg[1], vec!["take", "sample"]);
            assert!(sg.last().unwrap()[0] == "focus");
            assert!(!sg.iter().flatten().any(|w| *w == "HEAT" || *w == "COLD"));
        }
    }

    #[test]
    fn devices_differ_by_location() {
        assert!(procedure_actions(0).contains(&vec!["activate", "stove"]));
        assert!(!procedure_actions(0).contains(&vec!["activate", "burner"]));
        assert!(procedure_actions(1).contains(&vec!["activate", "burner"]));
    }
}
