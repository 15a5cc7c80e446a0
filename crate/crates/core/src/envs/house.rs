//! ToyHouse: fetch-and-place household tasks with a binary reward.
//!
//! Six rooms around a central hall. Some tasks require washing, warming or
//! chilling the object before placing it; `put` ends the episode.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Parsed, Transition};
use crate::trajectory::Split;

pub const ROOMS: [&str; 6] = ["hall", "kitchen", "bathroom", "bedroom", "office", "garage"];
const HALL: usize = 0;
const KITCHEN: usize = 1;
const BATHROOM: usize = 2;
pub const TASK_TYPES: [&str; 4] = ["place", "washed", "warmed", "chilled"];
pub const SEEN_OBJECTS: [&str; 6] = ["apple", "cup", "book", "towel", "plate", "bowl"];
pub const UNSEEN_OBJECTS: [&str; 4] = ["vase", "pen", "key", "sock"];
pub const RECEPTACLES: [&str; 3] = ["drawer", "shelf", "box"];
pub const COMMANDS: [&str; 8] = ["go", "look", "open", "take", "clean", "heat", "cool", "put"];
const OBS_WORDS: [&str; 8] = ["item", "to", "in", "holding", "empty", "nothing", "happened", "placed"];

pub fn words() -> Vec<&'static str> {
    let mut w = Vec::new();
    w.extend(COMMANDS);
    w.extend(ROOMS);
    w.extend(TASK_TYPES);
    w.extend(SEEN_OBJECTS);
    w.extend(UNSEEN_OBJECTS);
    w.extend(RECEPTACLES);
    w.extend(OBS_WORDS);
    w
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HouseGoal {
    pub task: usize,
    pub object: &'static str,
    pub start: usize,
    pub dest: usize,
    pub receptacle: usize,
}

impl HouseGoal {
    /// Room and verb of the required treatment, if any.
    fn treatment(&self) -> Option<(usize, &'static str)> {
        match self.task {
            1 => Some((BATHROOM, "clean")),
            2 => Some((KITCHEN, "heat")),
            3 => Some((KITCHEN, "cool")),
            _ => None,
        }
    }
}

pub fn generate(split: Split, rng: &mut ChaCha8Rng) -> (Vec<&'static str>, HouseGoal) {
    let objects: &[&'static str] = match split {
        Split::Seen => &SEEN_OBJECTS,
        Split::Unseen => &UNSEEN_OBJECTS,
    };
    let start = rng.random_range(1..ROOMS.len());
    let dest = loop {
        let d = rng.random_range(1..ROOMS.len());
        if d != start {
            break d;
        }
    };
    let goal = HouseGoal {
        task: rng.random_range(0..TASK_TYPES.len()),
        object: objects[rng.random_range(0..objects.len())],
        start,
        dest,
        receptacle: rng.random_range(0..RECEPTACLES.len()),
    };
    let words = vec![
        TASK_TYPES[goal.task],
        goal.object,
        ROOMS[goal.start],
        "to",
        ROOMS[goal.dest],
    ];
    (words, goal)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HouseWorld {
    pub room: usize,
    pub opened: bool,
    pub holding: bool,
    pub taken: bool,
    pub washed: bool,
    pub warmed: bool,
    pub chilled: bool,
    pub placed_in: Option<usize>,
}

pub fn reset(_goal: &HouseGoal) -> (HouseWorld, Vec<&'static str>) {
    (
        HouseWorld {
            room: HALL,
            opened: false,
            holding: false,
            taken: false,
            washed: false,
            warmed: false,
            chilled: false,
            placed_in: None,
        },
        vec!["hall"],
    )
}

pub fn step(world: &mut HouseWorld, goal: &HouseGoal, cmd: &Parsed) -> Transition {
    let room = ROOMS[world.room];
    match (cmd.command, cmd.args.as_slice()) {
        ("go", [dest]) => match ROOMS.iter().position(|r| r == dest) {
            Some(d) if (world.room == HALL) != (d == HALL) => {
                world.room = d;
                Transition::observe(vec![ROOMS[d]])
            }
            _ => Transition::invalid(),
        },
        ("look", []) => {
            if world.holding {
                Transition::observe(vec![room, "holding", goal.object])
            } else if world.room == goal.start && !world.taken {
                Transition::observe(vec![room, goal.object, "in", RECEPTACLES[goal.receptacle]])
            } else {
                Transition::observe(vec![room, "empty"])
            }
        }
        ("open", [r]) if world.room != HALL => match RECEPTACLES.iter().position(|x| x == r) {
            Some(ri) => {
                if world.room == goal.start && ri == goal.receptacle {
                    world.opened = true;
                }
                Transition::observe(vec![room, RECEPTACLES[ri], "open"])
            }
            None => Transition::invalid(),
        },
        ("take", ["item"]) if world.room == goal.start && world.opened && !world.taken => {
            world.holding = true;
            world.taken = true;
            Transition::observe(vec![room, "holding", goal.object])
        }
        ("clean", ["item"]) if world.holding && world.room == BATHROOM => {
            world.washed = true;
            Transition::observe(vec![room, goal.object, "washed"])
        }
        ("heat", ["item"]) if world.holding && world.room == KITCHEN => {
            world.warmed = true;
            Transition::observe(vec![room, goal.object, "warmed"])
        }
        ("cool", ["item"]) if world.holding && world.room == KITCHEN => {
            world.chilled = true;
            Transition::observe(vec![room, goal.object, "chilled"])
        }
        ("put", ["item"]) if world.holding => {
            world.holding = false;
            world.placed_in = Some(world.room);
            Transition::terminal(vec![room, goal.object, "placed"])
        }
        _ => Transition::invalid(),
    }
}

pub fn reward(world: &HouseWorld, goal: &HouseGoal) -> f64 {
    let treated = match goal.task {
        1 => world.washed,
        2 => world.warmed,
        3 => world.chilled,
        _ => true,
    };
    if world.placed_in == Some(goal.dest) && treated {
        1.0
    } else {
        0.0
    }
}

pub fn expert_plan(goal: &HouseGoal) -> Vec<Vec<&'static str>> {
    let mut plan: Vec<Vec<&'static str>> = vec![
        vec!["go", ROOMS[goal.start]],
        vec!["look"],
        vec!["open", RECEPTACLES[goal.receptacle]],
        vec!["take", "item"],
    ];
    let mut at = goal.start;
    let mut walk = |plan: &mut Vec<Vec<&'static str>>, to: usize| {
        if at != to {
            if at != HALL {
                plan.push(vec!["go", "hall"]);
            }
            plan.push(vec!["go", ROOMS[to]]);
            at = to;
        }
    };
    if let Some((room, verb)) = goal.treatment() {
        walk(&mut plan, room);
        plan.push(vec![verb, "item"]);
    }
    walk(&mut plan, goal.dest);
    plan.push(vec!["put", "item"]);
    let (ty, dest) = (TASK_TYPES[goal.task], ROOMS[goal.dest]);
    plan.into_iter()
        .map(|a| [ty, dest].into_iter().chain(a).collect())
        .collect()
}
