//! Active-set policies: the seam that decides which points receive a fresh
//! E-step next iteration.
//!
//! Four implementations ship with the crate:
//!
//! * [`Full`] — every point, every iteration (classic EM).
//! * [`Tau`] — a point leaves the active set once its hard assignment has
//!   been stable for `tau` consecutive E-steps; it never returns.
//! * [`Lazy`] — keeps only low-confidence points active, with a scheduled
//!   full E-step every `full_every` iterations so nobody stays trapped.
//! * [`Star`] — per-cluster max-heaps over membership weights; only the heap
//!   tails (the low-weight region) stay active.
//!
//! Policies are evaluated after the E-step barrier on the just-computed
//! state and return the active set for the *next* iteration.

use crate::model::{ActiveState, MembershipMatrix};

/// Everything a policy may observe after an iteration: the (possibly
/// partially stale) membership matrix, hard assignments for every row, the
/// active set that was just processed, and the 0-based iteration index.
pub struct PolicyObs<'a> {
    pub w: &'a MembershipMatrix,
    pub assignments: &'a [usize],
    pub active: &'a [usize],
    pub iteration: usize,
}

/// The policy abstraction: map post-E-step state to the next active set,
/// updating any per-point bookkeeping in `state`.
///
/// Policies must be `Send + Sync` so a fit can run inside a dedicated
/// thread pool.
pub trait ActiveSetPolicy: Send + Sync {
    /// Human-readable name echoed into reports and tables.
    fn name(&self) -> String;

    /// Produce the active set for the next iteration.
    fn next_active(&self, obs: &PolicyObs<'_>, state: &mut ActiveState) -> Vec<usize>;
}

/// Parameters for [`Tau`]: deactivate after `tau` consecutive iterations in
/// the same cluster.
#[derive(Debug, Clone, Copy)]
pub struct TauConfig {
    pub tau: u32,
}

impl TauConfig {
    pub fn new(tau: u32) -> Self {
        assert!(tau >= 1, "tau must be a positive integer");
        Self { tau }
    }
}

/// Parameters for [`Lazy`]: points with maximum responsibility above
/// `threshold` are considered settled and skipped, except on every
/// `full_every`-th iteration, which refreshes everyone.
#[derive(Debug, Clone, Copy)]
pub struct LazyConfig {
    pub threshold: f64,
    pub full_every: usize,
}

impl Default for LazyConfig {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            full_every: 5,
        }
    }
}

impl LazyConfig {
    pub fn new(threshold: f64, full_every: usize) -> Self {
        assert!(
            threshold > 0.0 && threshold < 1.0,
            "lazy threshold must lie in (0,1)"
        );
        assert!(full_every >= 1, "full_every must be a positive integer");
        Self {
            threshold,
            full_every,
        }
    }
}

/// Parameters for [`Star`]: `tail_fraction = None` keeps exactly the heap
/// leaves active; `Some(x)` widens the tail to the lowest `x` fraction of
/// heap positions (never narrower than the leaves).
#[derive(Debug, Clone, Copy, Default)]
pub struct StarConfig {
    pub tail_fraction: Option<f64>,
}

impl StarConfig {
    pub fn new(tail_fraction: Option<f64>) -> Self {
        if let Some(x) = tail_fraction {
            assert!(x > 0.0 && x <= 1.0, "tail fraction must lie in (0,1]");
        }
        Self { tail_fraction }
    }
}

/// The full active set {0..N−1}.
pub fn full_update(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Streak-counter update and selection.
///
/// For each point in `subset`: the streak increments if its hard assignment
/// matches the previous one, otherwise resets to 1 (a first-ever assignment
/// also counts 1). Points whose streak has reached `tau` leave the active
/// set and never return; everything outside `subset` is untouched.
pub fn tau_update(
    state: &mut ActiveState,
    assignments: &[usize],
    subset: &[usize],
    tau: u32,
) -> Vec<usize> {
    let mut next = Vec::with_capacity(subset.len());
    for &n in subset {
        let c = assignments[n];
        if state.streak[n] > 0 && state.cluster[n] == c {
            state.streak[n] += 1;
        } else {
            state.streak[n] = 1;
        }
        state.cluster[n] = c;
        if state.streak[n] < tau {
            next.push(n);
        } else {
            state.active[n] = false;
        }
    }
    next
}

/// Confidence filter with a periodic full refresh.
///
/// On iterations where `(iteration + 1) % full_every == 0` the whole dataset
/// is returned; otherwise the points whose maximum membership weight exceeds
/// the threshold are selected. The maxima are taken over the current matrix
/// as stored, stale rows included, so a point skipped earlier is judged by
/// its last computed responsibilities.
pub fn lazy_update(w: &MembershipMatrix, iteration: usize, cfg: &LazyConfig) -> Vec<usize> {
    let n = w.n();
    if (iteration + 1) % cfg.full_every == 0 {
        return full_update(n);
    }
    let mut next = Vec::new();
    for i in 0..n {
        let p = w.row(i).iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        if p > cfg.threshold {
            next.push(i);
        }
    }
    next
}

/// Heap-tail selection.
///
/// For every cluster, the active points currently assigned to it are
/// arranged into an array-backed binary max-heap keyed on their membership
/// weight for that cluster, so larger weights sit near the head and smaller
/// ones near the tail. The tail — leaf positions ⌊s/2⌋..s−1, optionally
/// widened to the lowest `tail_fraction` of positions — stays active; the
/// union of tails across clusters is returned.
pub fn star_update(
    w: &MembershipMatrix,
    assignments: &[usize],
    subset: &[usize],
    cfg: &StarConfig,
) -> Vec<usize> {
    let k = w.k();
    let mut per_cluster: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for &n in subset {
        let c = assignments[n];
        per_cluster[c].push((n, w.weights()[[n, c]]));
    }

    let mut next = Vec::new();
    for heap in per_cluster.iter_mut() {
        let s = heap.len();
        if s == 0 {
            continue;
        }
        heapify_max(heap);
        let mut tail_start = s / 2;
        if let Some(x) = cfg.tail_fraction {
            // Lowest x fraction of heap positions, never narrower than the leaves.
            let widened = ((1.0 - x) * s as f64).ceil() as usize;
            tail_start = tail_start.min(widened);
        }
        for &(n, _) in &heap[tail_start..] {
            next.push(n);
        }
    }
    next.sort_unstable();
    next
}

/// Floyd's bottom-up heap construction over (point, weight) pairs, ordering
/// by weight with the largest at index 0.
fn heapify_max(items: &mut [(usize, f64)]) {
    let s = items.len();
    for i in (0..s / 2).rev() {
        sift_down(items, i);
    }
}

fn sift_down(items: &mut [(usize, f64)], mut i: usize) {
    let s = items.len();
    loop {
        let l = 2 * i + 1;
        let r = l + 1;
        let mut largest = i;
        if l < s && items[l].1 > items[largest].1 {
            largest = l;
        }
        if r < s && items[r].1 > items[largest].1 {
            largest = r;
        }
        if largest == i {
            return;
        }
        items.swap(i, largest);
        i = largest;
    }
}

/// Classic EM: every point is active every iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Full;

impl ActiveSetPolicy for Full {
    fn name(&self) -> String {
        "full".into()
    }

    fn next_active(&self, obs: &PolicyObs<'_>, _state: &mut ActiveState) -> Vec<usize> {
        full_update(obs.w.n())
    }
}

/// Streak-based deactivation.
#[derive(Debug, Clone, Copy)]
pub struct Tau(pub TauConfig);

impl Tau {
    pub fn new(tau: u32) -> Self {
        Self(TauConfig::new(tau))
    }
}

impl ActiveSetPolicy for Tau {
    fn name(&self) -> String {
        format!("tau({})", self.0.tau)
    }

    fn next_active(&self, obs: &PolicyObs<'_>, state: &mut ActiveState) -> Vec<usize> {
        tau_update(state, obs.assignments, obs.active, self.0.tau)
    }
}

/// Confidence-threshold deactivation with scheduled full passes.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lazy(pub LazyConfig);

impl ActiveSetPolicy for Lazy {
    fn name(&self) -> String {
        format!("lazy({},{})", self.0.threshold, self.0.full_every)
    }

    fn next_active(&self, obs: &PolicyObs<'_>, state: &mut ActiveState) -> Vec<usize> {
        let next = lazy_update(obs.w, obs.iteration, &self.0);
        // Lazy re-activates freely; keep the flags in sync for reporting.
        state.active.fill(false);
        for &n in &next {
            state.active[n] = true;
        }
        next
    }
}

/// Heap-tail deactivation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Star(pub StarConfig);

impl ActiveSetPolicy for Star {
    fn name(&self) -> String {
        match self.0.tail_fraction {
            None => "star(leaves)".into(),
            Some(x) => format!("star({x})"),
        }
    }

    fn next_active(&self, obs: &PolicyObs<'_>, state: &mut ActiveState) -> Vec<usize> {
        let next = star_update(obs.w, obs.assignments, obs.active, &self.0);
        for &n in obs.active {
            state.active[n] = false;
        }
        for &n in &next {
            state.active[n] = true;
        }
        next
    }
}
