//! Fixtures shared by the benchmarks.

use semimatch::data::{gen_shapes, split, ShapesSpec, SplitSpec};
use semimatch::{Split, Tensor};

/// Deterministic values in `[0, 1)` without pulling in an RNG.
pub fn filler(n: usize, salt: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let h = (i ^ salt.rotate_left(17)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            (h >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// A `rows × classes` batch of softmax rows.
pub fn probs(rows: usize, classes: usize, salt: u64) -> Tensor {
    let mut v = filler(rows * classes, salt);
    for row in v.chunks_mut(classes) {
        let m = row.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = row.iter_mut().map(|x| {
            *x = (4.0 * (*x - m)).exp();
            *x
        }).sum();
        row.iter_mut().for_each(|x| *x /= z);
    }
    Tensor::from_vec(vec![rows, classes], v).unwrap()
}

/// Three-class 32×32 shapes with four labels per class.
pub fn shapes_split() -> Split {
    let ds = gen_shapes(&ShapesSpec { n_per_class: 100, ..ShapesSpec::default() }).unwrap();
    split(&ds, &SplitSpec { labels_per_class: 4, ..SplitSpec::default() }).unwrap()
}
