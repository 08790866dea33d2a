//! Generated benchmark tables.
//!
//! The tic-tac-toe table is exact (every legal final board with X moving
//! first). The others are synthetic stand-ins with a documented generating rule
//! and a fixed seed.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::tabular::{Column, Table, Target};

const LINES: [[usize; 3]; 8] = [
    [0, 1, 2],
    [3, 4, 5],
    [6, 7, 8],
    [0, 3, 6],
    [1, 4, 7],
    [2, 5, 8],
    [0, 4, 8],
    [2, 4, 6],
];

const SQUARES: [&str; 9] = [
    "top-left",
    "top-middle",
    "top-right",
    "middle-left",
    "middle-middle",
    "middle-right",
    "bottom-left",
    "bottom-middle",
    "bottom-right",
];

fn wins(board: &[u8; 9], player: u8) -> bool {
    LINES.iter().any(|l| l.iter().all(|&i| board[i] == player))
}

/// All 958 distinct end-of-game boards; the class is whether X won.
pub fn tic_tac_toe() -> Table {
    fn play(board: &mut [u8; 9], turn: u8, out: &mut BTreeSet<[u8; 9]>) {
        if wins(board, b'x') || wins(board, b'o') || board.iter().all(|&c| c != b'b') {
            out.insert(*board);
            return;
        }
        for i in 0..9 {
            if board[i] == b'b' {
                board[i] = turn;
                play(board, if turn == b'x' { b'o' } else { b'x' }, out);
                board[i] = b'b';
            }
        }
    }
    let mut boards = BTreeSet::new();
    play(&mut [b'b'; 9], b'x', &mut boards);

    let boards: Vec<[u8; 9]> = boards.into_iter().collect();
    let columns = SQUARES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let cells: Vec<String> = boards.iter().map(|b| (b[i] as char).to_string()).collect();
            let refs: Vec<Option<&str>> = cells.iter().map(|s| Some(s.as_str())).collect();
            Column::text(&format!("{name}-square"), &refs)
        })
        .collect();
    let labels: Vec<&str> = boards
        .iter()
        .map(|b| {
            if wins(b, b'x') {
                "positive"
            } else {
                "negative"
            }
        })
        .collect();
    Table::new(columns, Target::from_labels("class", &labels)).expect("well-formed")
}

/// The full 1728-row grid of six ordinal car attributes, labelled by a
/// hierarchical price/comfort/safety rule into four acceptability classes.
pub fn car_style() -> Table {
    const LEVELS4: [&str; 4] = ["vhigh", "high", "med", "low"];
    const DOORS: [&str; 4] = ["2", "3", "4", "5more"];
    const PERSONS: [&str; 3] = ["2", "4", "more"];
    const LUG: [&str; 3] = ["small", "med", "big"];
    const SAFETY: [&str; 3] = ["low", "med", "high"];

    let mut rows: Vec<[usize; 6]> = Vec::with_capacity(1728);
    for b in 0..4 {
        for m in 0..4 {
            for d in 0..4 {
                for p in 0..3 {
                    for l in 0..3 {
                        for s in 0..3 {
                            rows.push([b, m, d, p, l, s]);
                        }
                    }
                }
            }
        }
    }
    let label = |r: &[usize; 6]| -> &'static str {
        let [b, m, d, p, l, s] = *r;
        if p == 0 || s == 0 {
            return "unacc";
        }
        // 0 (too expensive) ..= 3 (cheap)
        let price = match b + m {
            0 | 1 => 0,
            2 | 3 => 1,
            4 => 2,
            _ => 3,
        };
        if price == 0 {
            return "unacc";
        }
        let comfort = usize::from(d >= 2 || p == 2) + l;
        let tech = comfort + 2 * (s - 1);
        match price + tech {
            0..=2 => "unacc",
            3..=4 => "acc",
            5 => {
                if s == 2 {
                    "good"
                } else {
                    "acc"
                }
            }
            _ => {
                if s == 2 && l >= 1 {
                    "vgood"
                } else {
                    "good"
                }
            }
        }
    };
    let col = |name: &str, idx: usize, levels: &[&str]| {
        let cells: Vec<Option<&str>> = rows.iter().map(|r| Some(levels[r[idx]])).collect();
        Column::text(name, &cells)
    };
    let columns = vec![
        col("buying", 0, &LEVELS4),
        col("maint", 1, &LEVELS4),
        col("doors", 2, &DOORS),
        col("persons", 3, &PERSONS),
        col("lug_boot", 4, &LUG),
        col("safety", 5, &SAFETY),
    ];
    let labels: Vec<&str> = rows.iter().map(label).collect();
    Table::new(columns, Target::from_labels("class", &labels)).expect("well-formed")
}

fn flip<R: Rng>(label: bool, rate: f64, rng: &mut R) -> bool {
    if rng.random::<f64>() < rate {
        !label
    } else {
        label
    }
}

fn bool_labels(y: &[bool]) -> Vec<&'static str> {
    y.iter().map(|&b| if b { "yes" } else { "no" }).collect()
}

/// Mixed-type table whose best preprocessing is not the textbook default.
///
/// `code` has 40 levels `c00..c39` and carries signal through `index < 20`, a
/// single cut under Ordinal but twenty splits under OneHot. `reading` is
/// numeric with 25% missing cells; `shade` is a four-level category; `amount`
/// is heavy-tailed; `flag` is a binary category with gaps.
pub fn planted_mixed(n: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let shades = ["black", "blue", "green", "red"];
    let mut code = Vec::with_capacity(n);
    let mut reading = Vec::with_capacity(n);
    let mut shade = Vec::with_capacity(n);
    let mut amount = Vec::with_capacity(n);
    let mut flag = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..40usize);
        let r: f64 = normal.sample(&mut rng);
        let s = rng.random_range(0..4usize);
        let a = (normal.sample(&mut rng) * 1.5).exp() * 1000.0;
        let f = rng.random_bool(0.5);
        let votes = usize::from(c < 20) + usize::from(r > 0.3) + usize::from(s == 1 || s == 3);
        y.push(flip(votes >= 2, 0.05, &mut rng));
        code.push(format!("c{c:02}"));
        reading.push((rng.random::<f64>() >= 0.25).then_some(r));
        shade.push(shades[s]);
        amount.push(Some((a * 100.0).round() / 100.0));
        flag.push((rng.random::<f64>() >= 0.1).then_some(if f { "on" } else { "off" }));
    }
    let code_refs: Vec<Option<&str>> = code.iter().map(|s| Some(s.as_str())).collect();
    let shade_refs: Vec<Option<&str>> = shade.iter().map(|&s| Some(s)).collect();
    Table::new(
        vec![
            Column::text("code", &code_refs),
            Column::numeric("reading", &reading),
            Column::text("shade", &shade_refs),
            Column::numeric("amount", &amount),
            Column::text("flag", &flag),
        ],
        Target::from_labels("label", &bool_labels(&y)),
    )
    .expect("well-formed")
}

/// Three-feature table for exhaustive comparison: a 12-level category, a
/// numeric column whose missingness is itself informative, and a noisy
/// numeric column.
pub fn planted_small(n: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut level = Vec::with_capacity(n);
    let mut gauge = Vec::with_capacity(n);
    let mut jitter = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let l = rng.random_range(0..12usize);
        let g: f64 = normal.sample(&mut rng);
        let missing = rng.random::<f64>() < 0.3;
        let j: f64 = normal.sample(&mut rng);
        let signal = if missing {
            l % 3 == 0
        } else {
            (l < 6) ^ (g > 0.0)
        };
        y.push(flip(signal, 0.03, &mut rng));
        level.push(format!("L{l:02}"));
        gauge.push((!missing).then_some((g * 1000.0).round() / 1000.0));
        jitter.push(Some(
            (j * 1000.0).round() / 1000.0 + if signal { 0.4 } else { 0.0 },
        ));
    }
    let level_refs: Vec<Option<&str>> = level.iter().map(|s| Some(s.as_str())).collect();
    Table::new(
        vec![
            Column::text("level", &level_refs),
            Column::numeric("gauge", &gauge),
            Column::numeric("jitter", &jitter),
        ],
        Target::from_labels("label", &bool_labels(&y)),
    )
    .expect("well-formed")
}

/// Number of missing cells per column of [`dresses_shaped`], in column order.
pub const DRESSES_MISSING: [usize; 12] = [0, 2, 0, 0, 2, 3, 2, 87, 128, 266, 236, 109];

/// A 500-row retail table shaped like a dress-sales catalogue: one numeric
/// rating, eleven categorical attributes, 835 missing cells and a weakly
/// predictable binary recommendation.
pub fn dresses_shaped(seed: u64) -> Table {
    const N: usize = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: [(&str, usize); 12] = [
        ("Style", 13),
        ("Price", 5),
        ("Rating", 0),
        ("Size", 5),
        ("Season", 4),
        ("NeckLine", 15),
        ("SleeveLength", 10),
        ("waiseline", 4),
        ("Material", 20),
        ("FabricType", 20),
        ("Decoration", 20),
        ("Pattern Type", 14),
    ];
    let mut columns = Vec::with_capacity(specs.len());
    let mut codes: Vec<Vec<usize>> = Vec::new();
    let mut rating: Vec<f64> = Vec::new();
    for (j, &(name, levels)) in specs.iter().enumerate() {
        let mut missing_rows: Vec<usize> = (0..N).collect();
        missing_rows.shuffle(&mut rng);
        missing_rows.truncate(DRESSES_MISSING[j]);
        let is_missing = |r: usize| missing_rows.contains(&r);
        if levels == 0 {
            rating = (0..N)
                .map(|_| {
                    if rng.random::<f64>() < 0.2 {
                        0.0
                    } else {
                        (rng.random_range(3.0..5.0f64) * 10.0).round() / 10.0
                    }
                })
                .collect();
            let cells: Vec<Option<f64>> = (0..N)
                .map(|r| (!is_missing(r)).then_some(rating[r]))
                .collect();
            columns.push(Column::numeric(name, &cells));
            codes.push(Vec::new());
        } else {
            // skewed level frequencies, as in catalogue data
            let drawn: Vec<usize> = (0..N)
                .map(|_| {
                    let u: f64 = rng.random();
                    ((u * u) * levels as f64) as usize
                })
                .collect();
            let names: Vec<String> = (0..N)
                .map(|r| format!("{}{}", name[..2].to_lowercase(), drawn[r]))
                .collect();
            let cells: Vec<Option<&str>> = (0..N)
                .map(|r| (!is_missing(r)).then_some(names[r].as_str()))
                .collect();
            columns.push(Column::text(name, &cells));
            codes.push(drawn);
        }
    }
    let y: Vec<bool> = (0..N)
        .map(|r| {
            let score = 0.5 * f64::from(rating[r] >= 4.2)
                + 0.4 * f64::from(codes[0][r].is_multiple_of(3))
                + 0.3 * f64::from(codes[1][r] <= 1)
                + 0.3 * f64::from(codes[4][r] == 2);
            flip(score >= 0.7, 0.15, &mut rng)
        })
        .collect();
    Table::new(
        columns,
        Target::from_labels("Recommendation", &bool_labels(&y)),
    )
    .expect("well-formed")
}

/// Twelve-feature mixed table with a clear signal spread over several columns.
pub fn planted_wide(n: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut columns = Vec::new();
    let mut signal = vec![0.0; n];
    for j in 0..6 {
        let values: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let weight = [1.0, -0.8, 0.6, 0.0, 0.0, 0.4][j];
        for r in 0..n {
            signal[r] += weight * values[r];
        }
        let cells: Vec<Option<f64>> = values
            .iter()
            .map(|&v| (rng.random::<f64>() >= 0.1).then_some((v * 100.0).round() / 100.0))
            .collect();
        columns.push(Column::numeric(&format!("x{j}"), &cells));
    }
    for j in 0..6 {
        let levels = [3, 5, 8, 12, 4, 30][j];
        let codes: Vec<usize> = (0..n).map(|_| rng.random_range(0..levels)).collect();
        for r in 0..n {
            if j < 3 {
                signal[r] += if codes[r] * 2 < levels { 0.7 } else { -0.7 };
            }
        }
        let names: Vec<String> = codes.iter().map(|c| format!("k{j}_{c:02}")).collect();
        let cells: Vec<Option<&str>> = names
            .iter()
            .map(|s| (rng.random::<f64>() >= 0.05).then_some(s.as_str()))
            .collect();
        columns.push(Column::text(&format!("c{j}"), &cells));
    }
    let y: Vec<bool> = signal
        .iter()
        .map(|&s| flip(s > 0.0, 0.05, &mut rng))
        .collect();
    Table::new(columns, Target::from_labels("label", &bool_labels(&y))).expect("well-formed")
}
