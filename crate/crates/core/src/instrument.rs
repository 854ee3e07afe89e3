//! Per-thread operation counters used to check amortization claims in tests.

use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Counter {
    Svd,
    Qr,
    /// Full orthonormalization passes over a network (not amortized center moves).
    FullOrthonormalize,
    Swap,
    Merge,
    /// SVDs performed while scoring index factorizations.
    ReshapeSvd,
}

const N: usize = 6;

thread_local! {
    static COUNTS: [Cell<u64>; N] = const { [const { Cell::new(0) }; N] };
}

fn slot(c: Counter) -> usize {
    match c {
        Counter::Svd => 0,
        Counter::Qr => 1,
        Counter::FullOrthonormalize => 2,
        Counter::Swap => 3,
        Counter::Merge => 4,
        Counter::ReshapeSvd => 5,
    }
}

pub fn bump(c: Counter) {
    COUNTS.with(|a| {
        let cell = &a[slot(c)];
        cell.set(cell.get() + 1);
    });
}

pub fn get(c: Counter) -> u64 {
    COUNTS.with(|a| a[slot(c)].get())
}

pub fn reset() {
    COUNTS.with(|a| a.iter().for_each(|c| c.set(0)));
}
