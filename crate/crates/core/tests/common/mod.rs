#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use reconfig_core::lattice::{Cell, Configuration, ModulePose, Orientation};

pub const NEIGHBORS: [Cell; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

pub fn add(a: Cell, b: Cell) -> Cell {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Identity-oriented modules, ids in cell order, anchored on id 0.
pub fn config(cells: &[Cell]) -> Configuration {
    Configuration::from_cells(cells, "m")
}

/// Modules with the given orientations and anchor.
pub fn oriented(cells: &[Cell], orients: &[Orientation], anchor: u32) -> Configuration {
    let modules = cells
        .iter()
        .zip(orients)
        .enumerate()
        .map(|(i, (&c, &o))| ModulePose {
            orient: o,
            ..ModulePose::new(i as u32, c, "m")
        })
        .collect();
    Configuration::new(anchor, modules)
}

/// Face-connected cell set grown from the origin by random accretion.
pub fn random_shape<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Cell> {
    let mut cells = vec![[0, 0, 0]];
    let mut set = BTreeSet::from([[0, 0, 0]]);
    while cells.len() < n {
        let base = *cells.choose(rng).expect("non-empty");
        let next = add(base, *NEIGHBORS.choose(rng).expect("six"));
        if set.insert(next) {
            cells.push(next);
        }
    }
    cells
}

/// Random connected configuration with random proper orientations.
pub fn random_config<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Configuration {
    let cells = random_shape(rng, n);
    let all = Orientation::all_proper();
    let orients: Vec<Orientation> = (0..n).map(|_| *all.choose(rng).expect("24")).collect();
    oriented(&cells, &orients, 0)
}

fn normalize(cells: &BTreeSet<Cell>) -> BTreeSet<Cell> {
    let mut min = [i32::MAX; 3];
    for c in cells {
        for k in 0..3 {
            min[k] = min[k].min(c[k]);
        }
    }
    cells
        .iter()
        .map(|c| [c[0] - min[0], c[1] - min[1], c[2] - min[2]])
        .collect()
}

/// Every fixed polycube (distinct up to translation) with `n` cells.
pub fn polycubes(n: usize) -> Vec<Vec<Cell>> {
    let mut level: BTreeSet<BTreeSet<Cell>> = BTreeSet::from([BTreeSet::from([[0, 0, 0]])]);
    for _ in 1..n {
        let mut next = BTreeSet::new();
        for shape in &level {
            for c in shape {
                for d in NEIGHBORS {
                    let cell = add(*c, d);
                    if !shape.contains(&cell) {
                        let mut grown = shape.clone();
                        grown.insert(cell);
                        next.insert(normalize(&grown));
                    }
                }
            }
        }
        level = next;
    }
    level.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Cells reachable from `start` through face adjacency.
pub fn flood(cells: &BTreeSet<Cell>, start: Cell) -> BTreeSet<Cell> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(c) = stack.pop() {
        for d in NEIGHBORS {
            let n = add(c, d);
            if cells.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen
}
