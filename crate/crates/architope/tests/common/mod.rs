//! Helpers shared by the integration suites.

use architope::metrics::FunctionHandle;
use architope::partition::Partition;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Prints one pass/fail line per gate and panics on failure so the
/// suite output doubles as a checklist.
pub fn gate(name: &str, ok: bool, detail: &str) {
    if ok {
        println!("[PASS] {name}: {detail}");
    } else {
        println!("[FAIL] {name}: {detail}");
        panic!("{name}: {detail}");
    }
}

/// A random piecewise cubic supported on regions 1..=n of a 1-d
/// partition: an independent cubic per region, zero outside the prefix.
pub fn piecewise_cubic(partition: &Partition, n: usize, rng: &mut ChaCha8Rng) -> FunctionHandle {
    let coeffs: Vec<[f64; 4]> = (0..n)
        .map(|_| {
            [
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
                rng.gen_range(-1.0..=1.0),
            ]
        })
        .collect();
    let partition = partition.clone();
    FunctionHandle::scalar("piecewise-cubic", move |x| {
        match partition.locate(x) {
            Some(i) if i <= n => {
                let c = &coeffs[i - 1];
                let t = x[0];
                ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
            }
            _ => 0.0,
        }
    })
}

/// The indicator of one partition region as a scalar handle.
pub fn indicator(partition: &Partition, index: usize) -> FunctionHandle {
    let region = partition.region(index).unwrap().clone();
    FunctionHandle::scalar(format!("indicator(K{index})"), move |x| {
        if region.membership(x) {
            1.0
        } else {
            0.0
        }
    })
}
