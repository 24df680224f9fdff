#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use coalctl_core::harness::{parse_config, synthesize_all, GainStore, SimConfig};
use coalctl_core::model::Link;

pub fn platoon_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/platoon.cfg")
}

pub fn platoon_text() -> String {
    std::fs::read_to_string(platoon_path()).expect("bundled config")
}

pub fn platoon() -> SimConfig {
    parse_config(&platoon_text()).expect("bundled config parses")
}

/// Gains for the bundled config, designed once per test binary.
pub fn platoon_store() -> &'static GainStore {
    static STORE: OnceLock<GainStore> = OnceLock::new();
    STORE.get_or_init(|| synthesize_all(&platoon()).expect("platoon design"))
}

/// Coalition id per agent by flood fill.
pub fn membership(n: usize, links: &[Link]) -> Vec<usize> {
    let mut id = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if id[s] != usize::MAX {
            continue;
        }
        id[s] = next;
        let mut stack = vec![s];
        while let Some(a) = stack.pop() {
            for &(i, j) in links {
                for (p, q) in [(i, j), (j, i)] {
                    if p == a && id[q] == usize::MAX {
                        id[q] = next;
                        stack.push(q);
                    }
                }
            }
        }
        next += 1;
    }
    id
}
