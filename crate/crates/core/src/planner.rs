//! Comb-tooth allocation for a fully connected star network.
//!
//! Each comb magnitude `n ≥ 1` carries two EPR instances:
//!
//! - orientation `A`: signal at `ω₀ − nΩ`, idler at `ω₀ + nΩ`;
//! - orientation `B`: signal at `ω₀ + nΩ`, idler at `ω₀ − nΩ`.
//!
//! Every unordered user pair receives one instance, one tooth per user. A
//! user demultiplexes its teeth by frequency and each frequency slot also
//! carries the polarization-multiplexed LO, so the signed tooth offsets a user
//! receives must be pairwise distinct. Users are numbered from 1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::gaussian::DeltaConvention;
use crate::keyrate::{key_rate, KeyRateReport};
use crate::link::{propagate, LinkParams};
use crate::opo::{source_covariance, OpoParams, SeedNoiseModel, DEFAULT_CLEAN_THRESHOLD};

/// Slack on bandwidth ratios so that e.g. 45 GHz / 15 GHz floors to 3.
const RATIO_SLACK: f64 = 1e-9;

/// Upper bound on backtracking nodes before giving up.
const SEARCH_LIMIT: u64 = 50_000_000;

/// Forces the heterodyne (reference) role of one pair onto a given user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeterodyneOverride {
    pub users: [usize; 2],
    pub het_user: usize,
}

/// Network-level resources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_users: usize,
    pub fsr_hz: f64,
    /// Largest sideband offset the LO modulator can produce.
    pub mod_bandwidth_hz: f64,
    pub ws_min_spacing_hz: f64,
    /// Total down-conversion bandwidth (both sides of the carrier).
    pub comb_bandwidth_hz: f64,
    /// Teeth whose technical-noise ratio exceeds this are not used.
    pub noise_clean_threshold: f64,
    #[serde(default)]
    pub heterodyne_overrides: Vec<HeterodyneOverride>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            n_users: 4,
            fsr_hz: 15e9,
            mod_bandwidth_hz: 45e9,
            ws_min_spacing_hz: 10e9,
            comb_bandwidth_hz: 1e12,
            noise_clean_threshold: DEFAULT_CLEAN_THRESHOLD,
            heterodyne_overrides: Vec::new(),
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 2 {
            return Err(Error::Domain(format!(
                "network.n_users must be >= 2, got {}",
                self.n_users
            )));
        }
        for (name, v) in [
            ("fsr_hz", self.fsr_hz),
            ("mod_bandwidth_hz", self.mod_bandwidth_hz),
            ("ws_min_spacing_hz", self.ws_min_spacing_hz),
            ("comb_bandwidth_hz", self.comb_bandwidth_hz),
            ("noise_clean_threshold", self.noise_clean_threshold),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("network.{name} must be > 0, got {v}")));
            }
        }
        for o in &self.heterodyne_overrides {
            let [u, v] = o.users;
            let in_range = |x: usize| (1..=self.n_users).contains(&x);
            if u == v || !in_range(u) || !in_range(v) || (o.het_user != u && o.het_user != v) {
                return Err(Error::Domain(format!(
                    "invalid heterodyne override: pair {:?}, het_user {}",
                    o.users, o.het_user
                )));
            }
        }
        Ok(())
    }

    pub fn pairs_needed(&self) -> usize {
        self.n_users * (self.n_users - 1) / 2
    }

    fn heterodyne_user(&self, lower: usize, upper: usize) -> usize {
        self.heterodyne_overrides
            .iter()
            .find(|o| {
                let [u, v] = o.users;
                (u.min(v), u.max(v)) == (lower, upper)
            })
            .map_or(lower, |o| o.het_user)
    }
}

/// Which of the two EPR instances of a magnitude is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Orientation {
    A,
    B,
}

impl Orientation {
    /// Signed offset of the signal tooth for magnitude `n`.
    pub fn signal_offset(self, n: u32) -> i32 {
        let n = n as i32;
        match self {
            Orientation::A => -n,
            Orientation::B => n,
        }
    }

    pub fn idler_offset(self, n: u32) -> i32 {
        -self.signal_offset(n)
    }
}

/// One user pair's share of the comb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAssignment {
    /// `(lower, upper)` user indices.
    pub users: (usize, usize),
    pub comb_magnitude: u32,
    pub orientation: Orientation,
    pub signal_user: usize,
    pub idler_user: usize,
    /// Reference user (heterodyne, mode A of the key-rate model).
    pub het_user: usize,
    pub signal_offset: i32,
    pub idler_offset: i32,
}

impl PairAssignment {
    /// Signed tooth offset delivered to `user`, if the user is in this pair.
    pub fn offset_for(&self, user: usize) -> Option<i32> {
        if user == self.signal_user {
            Some(self.signal_offset)
        } else if user == self.idler_user {
            Some(self.idler_offset)
        } else {
            None
        }
    }

    pub fn partner_of_het(&self) -> usize {
        if self.het_user == self.users.0 {
            self.users.1
        } else {
            self.users.0
        }
    }
}

/// Tooth budget against the network's needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    /// `⌊mod_bandwidth / Ω⌋`.
    pub k_max_modulation: u32,
    /// `⌊(comb_bandwidth / 2) / Ω⌋`.
    pub k_max_comb: u32,
    /// Magnitudes inside both bandwidths that pass the noise threshold.
    pub usable_magnitudes: Vec<u32>,
    /// Magnitudes inside both bandwidths rejected as too noisy.
    pub noisy_magnitudes: Vec<u32>,
    pub pairs_available: usize,
    pub pairs_needed: usize,
    pub feasible: bool,
    pub limiting_constraint: String,
    /// LO branches if the LO is split once per user pair.
    pub lo_branches_per_pair: usize,
    /// LO branches if both orientations of a magnitude share one modulated branch.
    pub lo_branches_shared: usize,
}

impl BudgetReport {
    pub fn summary(&self) -> String {
        let cmp = if self.feasible { "<=" } else { ">" };
        format!(
            "pairs_needed = {} {cmp} pairs_available = {} (limiting: {})",
            self.pairs_needed, self.pairs_available, self.limiting_constraint
        )
    }
}

fn floor_ratio(num: f64, den: f64) -> u32 {
    (num / den + RATIO_SLACK).floor().max(0.0) as u32
}

/// Budget assuming every tooth inside the bandwidth is noise-free.
pub fn pair_budget(spec: &NetworkSpec) -> Result<BudgetReport> {
    pair_budget_with_noise(spec, |_| Ok(0.0))
}

/// Budget with a per-tooth technical-noise ratio (see
/// [`crate::opo::sideband_cleanliness`]). Tooth 0 is never usable.
pub fn pair_budget_with_noise<F>(spec: &NetworkSpec, tooth_noise: F) -> Result<BudgetReport>
where
    F: Fn(u32) -> Result<f64>,
{
    spec.validate()?;
    if spec.fsr_hz < spec.ws_min_spacing_hz {
        return Err(Error::InfeasibleSpacing {
            fsr_hz: spec.fsr_hz,
            min_spacing_hz: spec.ws_min_spacing_hz,
        });
    }
    let k_max_modulation = floor_ratio(spec.mod_bandwidth_hz, spec.fsr_hz);
    let k_max_comb = floor_ratio(0.5 * spec.comb_bandwidth_hz, spec.fsr_hz);
    let k_max = k_max_modulation.min(k_max_comb);

    let mut usable_magnitudes = Vec::new();
    let mut noisy_magnitudes = Vec::new();
    for n in 1..=k_max {
        if tooth_noise(n)? <= spec.noise_clean_threshold {
            usable_magnitudes.push(n);
        } else {
            noisy_magnitudes.push(n);
        }
    }

    let pairs_available = 2 * usable_magnitudes.len();
    let pairs_needed = spec.pairs_needed();
    let feasible = pairs_available >= pairs_needed;
    let limiting_constraint = if feasible {
        "none"
    } else if 2 * k_max as usize >= pairs_needed {
        "sideband noise"
    } else if k_max_modulation <= k_max_comb {
        "modulation bandwidth"
    } else {
        "comb bandwidth"
    }
    .to_string();

    Ok(BudgetReport {
        k_max_modulation,
        k_max_comb,
        usable_magnitudes,
        noisy_magnitudes,
        pairs_available,
        pairs_needed,
        feasible,
        limiting_constraint,
        lo_branches_per_pair: pairs_needed,
        lo_branches_shared: pairs_needed.div_ceil(2),
    })
}

/// A complete assignment for the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkPlan {
    pub spec: NetworkSpec,
    pub assignments: Vec<PairAssignment>,
    /// User → received signed tooth offsets, in assignment order.
    pub per_user_frequencies: BTreeMap<usize, Vec<i32>>,
    pub feasible: bool,
    pub budget: BudgetReport,
}

/// Candidate choice for one edge.
#[derive(Clone, Copy)]
struct Choice {
    magnitude_slot: usize,
    orientation: Orientation,
    lower_gets_negative: bool,
}

struct Search<'a> {
    edges: Vec<(usize, usize)>,
    magnitudes: &'a [u32],
    /// `used[slot][orientation]`
    used: Vec<[bool; 2]>,
    /// Offsets held by each user (index 0 unused).
    held: Vec<BTreeSet<i32>>,
    chosen: Vec<Choice>,
    nodes: u64,
}

impl Search<'_> {
    fn candidates(&self) -> impl Iterator<Item = Choice> + '_ {
        (0..self.magnitudes.len()).flat_map(|magnitude_slot| {
            [Orientation::A, Orientation::B]
                .into_iter()
                .flat_map(move |orientation| {
                    [true, false].into_iter().map(move |lower_gets_negative| Choice {
                        magnitude_slot,
                        orientation,
                        lower_gets_negative,
                    })
                })
        })
    }

    fn offsets(&self, choice: Choice) -> (i32, i32) {
        let n = self.magnitudes[choice.magnitude_slot] as i32;
        if choice.lower_gets_negative {
            (-n, n)
        } else {
            (n, -n)
        }
    }

    fn solve(&mut self, depth: usize) -> Result<bool> {
        if depth == self.edges.len() {
            return Ok(true);
        }
        self.nodes += 1;
        if self.nodes > SEARCH_LIMIT {
            return Err(Error::AllocationFailed(format!(
                "search limit of {SEARCH_LIMIT} nodes exceeded"
            )));
        }
        let (lower, upper) = self.edges[depth];
        let options: Vec<Choice> = self.candidates().collect();
        for choice in options {
            let o = choice.orientation as usize;
            if self.used[choice.magnitude_slot][o] {
                continue;
            }
            let (off_lower, off_upper) = self.offsets(choice);
            if self.held[lower].contains(&off_lower) || self.held[upper].contains(&off_upper) {
                continue;
            }
            self.used[choice.magnitude_slot][o] = true;
            self.held[lower].insert(off_lower);
            self.held[upper].insert(off_upper);
            self.chosen.push(choice);
            if self.solve(depth + 1)? {
                return Ok(true);
            }
            self.chosen.pop();
            self.held[upper].remove(&off_upper);
            self.held[lower].remove(&off_lower);
            self.used[choice.magnitude_slot][o] = false;
        }
        Ok(false)
    }
}

/// Deterministic backtracking over the edges of K_N in lexicographic order.
/// Ties: smallest magnitude, then orientation A, then the lower-indexed user
/// receiving the `−n` tooth.
pub fn allocate(spec: &NetworkSpec, budget: &BudgetReport) -> Result<NetworkPlan> {
    spec.validate()?;
    if !budget.feasible {
        return Err(Error::BudgetExceeded {
            needed: budget.pairs_needed,
            available: budget.pairs_available,
        });
    }
    let n = spec.n_users;
    let edges: Vec<(usize, usize)> = (1..=n).flat_map(|i| (i + 1..=n).map(move |j| (i, j))).collect();
    let mut search = Search {
        edges,
        magnitudes: &budget.usable_magnitudes,
        used: vec![[false; 2]; budget.usable_magnitudes.len()],
        held: vec![BTreeSet::new(); n + 1],
        chosen: Vec::new(),
        nodes: 0,
    };
    if !search.solve(0)? {
        return Err(Error::AllocationFailed(format!(
            "no assignment for {n} users over magnitudes {:?}",
            budget.usable_magnitudes
        )));
    }

    let mut assignments = Vec::with_capacity(search.edges.len());
    let mut per_user_frequencies: BTreeMap<usize, Vec<i32>> = (1..=n).map(|u| (u, Vec::new())).collect();
    for (&(lower, upper), &choice) in search.edges.iter().zip(&search.chosen) {
        let magnitude = budget.usable_magnitudes[choice.magnitude_slot];
        let (off_lower, off_upper) = search.offsets(choice);
        let signal_offset = choice.orientation.signal_offset(magnitude);
        let (signal_user, idler_user) = if off_lower == signal_offset {
            (lower, upper)
        } else {
            (upper, lower)
        };
        assignments.push(PairAssignment {
            users: (lower, upper),
            comb_magnitude: magnitude,
            orientation: choice.orientation,
            signal_user,
            idler_user,
            het_user: spec.heterodyne_user(lower, upper),
            signal_offset,
            idler_offset: choice.orientation.idler_offset(magnitude),
        });
        per_user_frequencies.entry(lower).or_default().push(off_lower);
        per_user_frequencies.entry(upper).or_default().push(off_upper);
    }

    Ok(NetworkPlan {
        spec: spec.clone(),
        assignments,
        per_user_frequencies,
        feasible: true,
        budget: budget.clone(),
    })
}

/// Outcome of [`verify_plan`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanVerification {
    pub valid: bool,
    pub violations: Vec<String>,
}

/// Re-derives every plan invariant from scratch. Shares no logic with
/// [`allocate`].
pub fn verify_plan(plan: &NetworkPlan, spec: &NetworkSpec) -> PlanVerification {
    let mut violations = Vec::new();
    let n = spec.n_users;

    if !plan.feasible {
        violations.push("plan is marked infeasible".to_string());
    }
    if spec.fsr_hz < spec.ws_min_spacing_hz {
        violations.push("free spectral range below waveshaper spacing".to_string());
    }
    let bound_mod = (spec.mod_bandwidth_hz / spec.fsr_hz + RATIO_SLACK).floor() as i64;
    let bound_comb = (spec.comb_bandwidth_hz / (2.0 * spec.fsr_hz) + RATIO_SLACK).floor() as i64;
    let bound = bound_mod.min(bound_comb);

    // coverage
    let mut cover: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for a in &plan.assignments {
        let (u, v) = a.users;
        if u == v || u == 0 || v == 0 || u > n || v > n {
            violations.push(format!("invalid user pair ({u}, {v})"));
            continue;
        }
        *cover.entry((u.min(v), u.max(v))).or_insert(0) += 1;
    }
    for i in 1..=n {
        for j in i + 1..=n {
            match cover.get(&(i, j)).copied().unwrap_or(0) {
                0 => violations.push(format!("uncovered user pair ({i}, {j})")),
                1 => {}
                k => violations.push(format!("user pair ({i}, {j}) assigned {k} times")),
            }
        }
    }

    // per-assignment consistency
    let mut instances: BTreeMap<(u32, Orientation), usize> = BTreeMap::new();
    for a in &plan.assignments {
        let (u, v) = a.users;
        let m = a.comb_magnitude;
        if m == 0 {
            violations.push(format!("pair ({u}, {v}) uses the carrier tooth"));
        }
        if i64::from(m) > bound {
            violations.push(format!(
                "pair ({u}, {v}) uses magnitude {m} beyond bandwidth limit {bound}"
            ));
        }
        let expect_signal = match a.orientation {
            Orientation::A => -(m as i32),
            Orientation::B => m as i32,
        };
        if a.signal_offset != expect_signal || a.idler_offset != -expect_signal {
            violations.push(format!(
                "pair ({u}, {v}) offsets ({}, {}) do not match orientation {:?} of magnitude {m}",
                a.signal_offset, a.idler_offset, a.orientation
            ));
        }
        let members = [u, v];
        if !(members.contains(&a.signal_user)
            && members.contains(&a.idler_user)
            && a.signal_user != a.idler_user)
        {
            violations.push(format!("pair ({u}, {v}) has signal/idler users outside the pair"));
        }
        if !members.contains(&a.het_user) {
            violations.push(format!(
                "pair ({u}, {v}) has heterodyne user {} outside the pair",
                a.het_user
            ));
        }
        *instances.entry((m, a.orientation)).or_insert(0) += 1;
    }
    for ((m, o), count) in &instances {
        if *count > 1 {
            violations.push(format!("EPR instance {m}{o:?} used {count} times"));
        }
    }

    // per-user distinctness, recomputed from the assignments
    let mut received: BTreeMap<usize, Vec<i32>> = BTreeMap::new();
    for a in &plan.assignments {
        received.entry(a.signal_user).or_default().push(a.signal_offset);
        received.entry(a.idler_user).or_default().push(a.idler_offset);
    }
    for (user, offsets) in &received {
        let mut seen = BTreeSet::new();
        for off in offsets {
            if !seen.insert(*off) {
                violations.push(format!("user {user} frequency collision at {off}"));
            }
        }
    }

    // the reported per-user table must match
    for user in 1..=n {
        let mut expect = received.get(&user).cloned().unwrap_or_default();
        let mut listed = plan.per_user_frequencies.get(&user).cloned().unwrap_or_default();
        expect.sort_unstable();
        listed.sort_unstable();
        if expect != listed {
            violations.push(format!(
                "user {user} frequency table {listed:?} disagrees with assignments {expect:?}"
            ));
        }
    }

    PlanVerification {
        valid: violations.is_empty(),
        violations,
    }
}

/// Key rate for one planned pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairKeyRate {
    pub users: (usize, usize),
    pub comb_magnitude: u32,
    pub het_user: usize,
    /// Fiber length of the heterodyne (mode A) user.
    pub l_het_km: f64,
    /// Fiber length of the homodyne (mode B) user.
    pub l_hom_km: f64,
    pub report: KeyRateReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkKeyRates {
    /// Ordered by user pair.
    pub pairs: Vec<PairKeyRate>,
    pub min_bits: f64,
    pub median_bits: f64,
    pub total_bits: f64,
}

/// Evaluates every planned pair. `distances_km[u - 1]` is user `u`'s arm
/// length from the central node. The reference (heterodyne) user of each
/// pair plays mode A; the link's `eta1`/`eps1` apply to that arm.
pub fn plan_keyrates(
    plan: &NetworkPlan,
    distances_km: &[f64],
    opo: &OpoParams,
    seed: &SeedNoiseModel,
    link: &LinkParams,
    convention: DeltaConvention,
    executor: &Executor,
) -> Result<NetworkKeyRates> {
    if distances_km.len() != plan.spec.n_users {
        return Err(Error::Domain(format!(
            "expected {} user distances, got {}",
            plan.spec.n_users,
            distances_km.len()
        )));
    }
    let mut pairs = executor.try_map(&plan.assignments, |a| {
        let het = a.het_user;
        let hom = a.partner_of_het();
        let (l_het_km, l_hom_km) = (distances_km[het - 1], distances_km[hom - 1]);
        let source = source_covariance(opo, seed, a.comb_magnitude)?;
        let received = propagate(&source.covariance, &link.with_distances(l_het_km, l_hom_km))?;
        let report = key_rate(&received, link.beta, convention)?;
        Ok::<_, Error>(PairKeyRate {
            users: a.users,
            comb_magnitude: a.comb_magnitude,
            het_user: het,
            l_het_km,
            l_hom_km,
            report,
        })
    })?;
    pairs.sort_by_key(|p| p.users);

    let mut rates: Vec<f64> = pairs.iter().map(|p| p.report.key_rate).collect();
    rates.sort_by(f64::total_cmp);
    let len = rates.len();
    let median_bits = match len {
        0 => f64::NAN,
        _ if len % 2 == 1 => rates[len / 2],
        _ => 0.5 * (rates[len / 2 - 1] + rates[len / 2]),
    };
    Ok(NetworkKeyRates {
        min_bits: rates.first().copied().unwrap_or(f64::NAN),
        median_bits,
        total_bits: rates.iter().sum(),
        pairs,
    })
}

/// Human-readable plan table.
pub fn render_table(plan: &NetworkPlan, rates: Option<&NetworkKeyRates>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} users, Ω = {:.3} GHz: {}",
        plan.spec.n_users,
        plan.spec.fsr_hz / 1e9,
        plan.budget.summary()
    );
    let _ = writeln!(
        out,
        "{:<8} {:>3} {:>4} {:>7} {:>7} {:>4} {:>14}",
        "pair", "n", "inst", "signal", "idler", "het", "K [bits/pulse]"
    );
    for a in &plan.assignments {
        let k = rates
            .and_then(|r| r.pairs.iter().find(|p| p.users == a.users))
            .map_or_else(|| "-".to_string(), |p| format!("{:.6}", p.report.key_rate));
        let _ = writeln!(
            out,
            "{:<8} {:>3} {:>4} {:>7} {:>7} {:>4} {:>14}",
            format!("U{}-U{}", a.users.0, a.users.1),
            a.comb_magnitude,
            format!("{:?}", a.orientation),
            format!("U{}:{:+}", a.signal_user, a.signal_offset),
            format!("U{}:{:+}", a.idler_user, a.idler_offset),
            format!("U{}", a.het_user),
            k
        );
    }
    for (user, offsets) in &plan.per_user_frequencies {
        let list: Vec<String> = offsets.iter().map(|o| format!("{o:+}")).collect();
        let _ = writeln!(out, "U{user}: {}", list.join(" "));
    }
    if let Some(r) = rates {
        let _ = writeln!(
            out,
            "min {:.6}  median {:.6}  total {:.6} bits/pulse",
            r.min_bits, r.median_bits, r.total_bits
        );
    }
    out
}
