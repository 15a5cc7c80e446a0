//! ToyShop: a five-page web-shopping analog with dense attribute/price reward.
//!
//! Pages: home → search results → product. The purchased configuration is
//! scored against the goal's category, color, size and price bound.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Parsed, Transition};
use crate::trajectory::Split;

pub const CATEGORIES: [&str; 5] = ["shirt", "shoe", "mug", "lamp", "bag"];
pub const COLORS: [&str; 6] = ["red", "blue", "green", "black", "white", "pink"];
pub const SEEN_COLORS: std::ops::Range<usize> = 0..4;
pub const UNSEEN_COLORS: std::ops::Range<usize> = 4..6;
pub const SIZES: [&str; 3] = ["small", "medium", "large"];
pub const PRICES: [&str; 5] = ["p10", "p20", "p30", "p40", "p50"];
pub const RANKS: [&str; 3] = ["r1", "r2", "r3"];
pub const COMMANDS: [&str; 5] = ["search", "click", "select", "buy", "back"];
const OBS_WORDS: [&str; 10] = [
    "home", "results", "none", "want", "color", "size", "selected", "bought", "under", "nothing",
];

pub const CATALOG_SIZE: usize = 50;
const CATALOG_SEED: u64 = 0x5eed_5409;

pub fn words() -> Vec<&'static str> {
    let mut w = Vec::new();
    w.extend(COMMANDS);
    w.extend(CATEGORIES);
    w.extend(COLORS);
    w.extend(SIZES);
    w.extend(PRICES);
    w.extend(RANKS);
    w.extend(OBS_WORDS);
    w.push("happened");
    w
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub category: usize,
    pub colors: Vec<usize>,
    pub sizes: Vec<usize>,
    pub price: usize,
}

impl Item {
    fn full_match(&self, goal: &ShopGoal) -> bool {
        self.category == goal.category
            && self.colors.contains(&goal.color)
            && self.sizes.contains(&goal.size)
    }
}

/// The fixed 50-item catalog shared by every instruction.
pub fn catalog() -> &'static [Item] {
    static CATALOG: OnceLock<Vec<Item>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(CATALOG_SEED);
        (0..CATALOG_SIZE)
            .map(|i| {
                let n_colors = rng.random_range(2..=3);
                let mut colors = Vec::new();
                while colors.len() < n_colors {
                    let c = rng.random_range(0..COLORS.len());
                    if !colors.contains(&c) {
                        colors.push(c);
                    }
                }
                colors.sort_unstable();
                let skip = rng.random_range(0..SIZES.len());
                let sizes = (0..SIZES.len()).filter(|&s| s != skip).collect();
                Item {
                    category: i % CATEGORIES.len(),
                    colors,
                    sizes,
                    price: rng.random_range(0..PRICES.len()),
                }
            })
            .collect()
    })
}

/// Ranks catalog items by how many query attributes they satisfy.
pub fn search(keywords: &[&str]) -> Vec<usize> {
    let mut kws: Vec<&str> = keywords.to_vec();
    kws.sort_unstable();
    kws.dedup();
    let mut scored: Vec<(usize, usize)> = catalog()
        .iter()
        .enumerate()
        .filter_map(|(i, item)| {
            let score = kws
                .iter()
                .filter(|&&k| {
                    index_of(&CATEGORIES, k) == Some(item.category)
                        || index_of(&COLORS, k).is_some_and(|c| item.colors.contains(&c))
                        || index_of(&SIZES, k).is_some_and(|s| item.sizes.contains(&s))
                })
                .count();
            (score > 0).then_some((score, i))
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(RANKS.len()).map(|(_, i)| i).collect()
}

fn index_of(list: &[&str], w: &str) -> Option<usize> {
    list.iter().position(|&x| x == w)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShopGoal {
    pub category: usize,
    pub color: usize,
    pub size: usize,
    /// Highest acceptable price bucket.
    pub price_bound: usize,
}

impl ShopGoal {
    fn query(&self) -> [&'static str; 3] {
        [CATEGORIES[self.category], COLORS[self.color], SIZES[self.size]]
    }

    /// Rank of the result the oracle clicks.
    pub fn expert_rank(&self) -> Option<usize> {
        let cat = catalog();
        search(&self.query())
            .iter()
            .position(|&i| cat[i].full_match(self) && cat[i].price <= self.price_bound)
    }
}

pub fn generate(split: Split, rng: &mut ChaCha8Rng) -> (Vec<&'static str>, ShopGoal) {
    let colors = match split {
        Split::Seen => SEEN_COLORS,
        Split::Unseen => UNSEEN_COLORS,
    };
    let cat = catalog();
    loop {
        let item = &cat[rng.random_range(0..CATALOG_SIZE)];
        let offered: Vec<usize> = item
            .colors
            .iter()
            .copied()
            .filter(|c| colors.contains(c))
            .collect();
        if offered.is_empty() {
            continue;
        }
        let color = offered[rng.random_range(0..offered.len())];
        let size = item.sizes[rng.random_range(0..item.sizes.len())];
        let mut goal = ShopGoal {
            category: item.category,
            color,
            size,
            price_bound: 0,
        };
        let results = search(&goal.query());
        let Some(min_price) = results
            .iter()
            .filter(|&&i| cat[i].full_match(&goal))
            .map(|&i| cat[i].price)
            .min()
        else {
            continue;
        };
        goal.price_bound = rng.random_range(min_price..PRICES.len());
        let words = vec![
            CATEGORIES[goal.category],
            COLORS[goal.color],
            SIZES[goal.size],
            "under",
            PRICES[goal.price_bound],
        ];
        return (words, goal);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Page {
    Home,
    Results(Vec<usize>),
    Product {
        results: Vec<usize>,
        item: usize,
        color: Option<usize>,
        size: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShopWorld {
    pub page: Page,
    /// (item, chosen color, chosen size) once bought.
    pub purchase: Option<(usize, Option<usize>, Option<usize>)>,
}

pub fn reset(_goal: &ShopGoal) -> (ShopWorld, Vec<&'static str>) {
    (
        ShopWorld {
            page: Page::Home,
            purchase: None,
        },
        vec!["home"],
    )
}

fn results_obs(results: &[usize]) -> Vec<&'static str> {
    let mut obs = vec!["results"];
    if results.is_empty() {
        obs.push("none");
    }
    let cat = catalog();
    for (rank, &i) in results.iter().enumerate() {
        obs.push(RANKS[rank]);
        obs.push(PRICES[cat[i].price]);
    }
    obs
}

fn product_obs(item: usize, goal: &ShopGoal) -> Vec<&'static str> {
    let it = &catalog()[item];
    let mut obs = vec!["want", COLORS[goal.color], SIZES[goal.size], PRICES[it.price], "color"];
    obs.extend(it.colors.iter().map(|&c| COLORS[c]));
    obs.push("size");
    obs.extend(it.sizes.iter().map(|&s| SIZES[s]));
    obs
}

pub fn step(world: &mut ShopWorld, goal: &ShopGoal, cmd: &Parsed) -> Transition {
    let page = std::mem::replace(&mut world.page, Page::Home);
    let (page, out) = match (page, cmd.command) {
        (Page::Home, "search") => {
            let results = search(&cmd.args);
            let obs = results_obs(&results);
            (Page::Results(results), Transition::observe(obs))
        }
        (Page::Results(results), "click") => {
            let rank = cmd
                .args
                .iter()
                .find_map(|a| index_of(&RANKS, a))
                .filter(|&r| r < results.len());
            match rank {
                Some(r) => {
                    let item = results[r];
                    let obs = product_obs(item, goal);
                    (
                        Page::Product {
                            results,
                            item,
                            color: None,
                            size: None,
                        },
                        Transition::observe(obs),
                    )
                }
                None => (Page::Results(results), Transition::invalid()),
            }
        }
        (Page::Results(_), "back") => (Page::Home, Transition::observe(vec!["home"])),
        (
            Page::Product {
                results,
                item,
                mut color,
                mut size,
            },
            verb,
        ) => {
            let it = &catalog()[item];
            let out = match verb {
                "select" => {
                    let pick = cmd.args.iter().find_map(|a| {
                        if let Some(c) = index_of(&COLORS, a).filter(|c| it.colors.contains(c)) {
                            Some((COLORS[c], Some(c), None))
                        } else {
                            index_of(&SIZES, a)
                                .filter(|s| it.sizes.contains(s))
                                .map(|s| (SIZES[s], None, Some(s)))
                        }
                    });
                    match pick {
                        Some((word, c, s)) => {
                            color = c.or(color);
                            size = s.or(size);
                            Transition::observe(vec!["selected", word])
                        }
                        None => Transition::invalid(),
                    }
                }
                "buy" => {
                    world.purchase = Some((item, color, size));
                    Transition::terminal(vec!["bought"])
                }
                "back" => {
                    let obs = results_obs(&results);
                    world.page = Page::Results(results);
                    return Transition::observe(obs);
                }
                _ => Transition::invalid(),
            };
            (
                Page::Product {
                    results,
                    item,
                    color,
                    size,
                },
                out,
            )
        }
        (page, _) => (page, Transition::invalid()),
    };
    world.page = page;
    out
}

pub fn reward(world: &ShopWorld, goal: &ShopGoal) -> f64 {
    let Some((item, color, size)) = world.purchase else {
        return 0.0;
    };
    let it = &catalog()[item];
    let matched = [
        it.category == goal.category,
        color == Some(goal.color),
        size == Some(goal.size),
        it.price <= goal.price_bound,
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    matched as f64 / 4.0
}

pub fn expert_plan(goal: &ShopGoal) -> Option<Vec<Vec<&'static str>>> {
    let rank = goal.expert_rank()?;
    let q = goal.query();
    Some(vec![
        vec!["search", q[0], q[1], q[2]],
        vec!["click", RANKS[rank]],
        vec!["select", q[1]],
        vec!["select", q[2]],
        vec!["buy"],
    ])
}
