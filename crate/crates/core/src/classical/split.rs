use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

use super::dcp::HazeClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        }
    }
}

/// `(train, test, val)` = `(⌊0.8n⌋, ⌊0.1n⌋, remainder)`.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = n * 8 / 10;
    let test = n / 10;
    (train, test, n - train - test)
}

/// Assign a split to every record given its class. Within each class the
/// records are shuffled with a stream derived from `seed` and the class,
/// then sliced contiguously into the splits.
pub fn stratified_split(classes: &[HazeClass], seed: u64) -> Vec<Split> {
    let root = SeededRng::new(seed);
    let mut out = vec![Split::Train; classes.len()];
    for class in HazeClass::ALL {
        let mut idx: Vec<usize> = (0..classes.len())
            .filter(|&i| classes[i] == class)
            .collect();
        root.split(class.as_str()).shuffle(&mut idx);
        let (train, test, _) = split_counts(idx.len());
        for (pos, &i) in idx.iter().enumerate() {
            out[i] = if pos < train {
                Split::Train
            } else if pos < train + test {
                Split::Test
            } else {
                Split::Val
            };
        }
    }
    out
}
