//! Wall-clock timing of per-query inference.

use std::time::Instant;

/// Minimum number of timed passes; the fastest one is reported.
pub const DEFAULT_PASSES: usize = 5;

/// Short passes are repeated until this much time has been measured.
pub const MIN_TIMED_SECONDS: f64 = 0.25;

/// Runs `f` on every item and returns the outputs and the mean seconds per
/// call. One untimed call warms up; then full passes are timed, at least
/// `passes` of them and until `MIN_TIMED_SECONDS` have elapsed, and the
/// fastest pass is reported, which filters out interference from other
/// processes. Outputs come from the first pass.
pub fn time_per_call<T, O>(items: &[T], passes: usize, mut f: impl FnMut(&T) -> O) -> (Vec<O>, f64) {
    if let Some(first) = items.first() {
        std::hint::black_box(f(first));
    }
    let mut outputs = Vec::new();
    let mut best = f64::INFINITY;
    let mut total = 0.0;
    let mut pass = 0;
    while pass < passes.max(1) || (total < MIN_TIMED_SECONDS && !items.is_empty()) {
        let start = Instant::now();
        if pass == 0 {
            outputs = items.iter().map(|x| std::hint::black_box(f(x))).collect();
        } else {
            items.iter().for_each(|x| {
                std::hint::black_box(f(x));
            });
        }
        let t = start.elapsed().as_secs_f64();
        best = best.min(t);
        total += t;
        pass += 1;
    }
    let per_call = if items.is_empty() {
        0.0
    } else {
        best / items.len() as f64
    };
    (outputs, per_call)
}
