//! Placement of control modules on edge resources.
//!
//! The program being solved:
//!
//! ```text
//! maximize   Σ_i Σ_j A(c_j, r_i) · x_ij
//! subject to Σ_i x_ij ≤ 1                              for every module j
//!            l_i + Σ_j x_ij · Load(c_j) ≤ Capacity(r_i) for every resource i
//!            x_ij ∈ {0, 1}
//! ```
//!
//! A module left unassigned runs at the cloud. `solve_exact` enumerates with
//! pruning for small instances, `solve_greedy` scales to any size.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on `(n+1)^m` for exhaustive search.
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 10_000_000;

// Relative slack for objective ties and capacity comparisons.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeResource {
    pub id: u32,
    pub capacity: f64,
    #[serde(default)]
    pub current_load: f64,
    /// Mbps
    pub bandwidth: f64,
    /// Normalized compute score in (0, 1].
    pub compute_rating: f64,
}

impl EdgeResource {
    pub fn residual(&self) -> f64 {
        self.capacity - self.current_load
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlModule {
    pub id: u32,
    pub load: f64,
    /// Criticality in (0, 1].
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinityWeights {
    pub bandwidth: f64,
    pub compute: f64,
}

impl Default for AffinityWeights {
    fn default() -> Self {
        Self {
            bandwidth: 0.5,
            compute: 0.5,
        }
    }
}

impl AffinityWeights {
    pub fn validate(&self) -> Result<(), AllocError> {
        if !(self.bandwidth >= 0.0 && self.compute >= 0.0) {
            return Err(AllocError::Weights("weights must be non-negative".into()));
        }
        if ((self.bandwidth + self.compute) - 1.0).abs() > 1e-9 {
            return Err(AllocError::Weights(format!(
                "weights must sum to 1 (got {})",
                self.bandwidth + self.compute
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("instance needs {count} enumeration leaves, above the limit of {limit}; use solve_greedy")]
    TooLarge { count: u64, limit: u64 },
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("invalid instance: {0}")]
    Instance(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// A module sits on more than one resource.
    MultipleAssignment { module_id: u32, count: usize },
    /// Background plus assigned load exceeds capacity.
    CapacityExceeded {
        resource_id: u32,
        load: f64,
        capacity: f64,
    },
    /// Matrix does not match the instance.
    Shape(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MultipleAssignment { module_id, count } => {
                write!(f, "module {module_id} assigned to {count} resources")
            }
            Violation::CapacityExceeded {
                resource_id,
                load,
                capacity,
            } => write!(f, "resource {resource_id} carries {load} > capacity {capacity}"),
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
        }
    }
}

/// `x[i][j]` is 1 when module `module_ids[j]` runs on resource `resource_ids[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub resource_ids: Vec<u32>,
    pub module_ids: Vec<u32>,
    pub x: Vec<Vec<u8>>,
    pub objective: f64,
    #[serde(default)]
    pub unassigned: Vec<u32>,
}

impl AssignmentPlan {
    fn from_choice(
        resources: &[EdgeResource],
        modules: &[ControlModule],
        choice: &[Option<usize>],
        affinity: &[Vec<f64>],
    ) -> Self {
        let mut x = vec![vec![0u8; modules.len()]; resources.len()];
        let mut objective = 0.0;
        let mut unassigned = Vec::new();
        for (j, c) in choice.iter().enumerate() {
            match c {
                Some(i) => {
                    x[*i][j] = 1;
                    objective += affinity[*i][j];
                }
                None => unassigned.push(modules[j].id),
            }
        }
        Self {
            resource_ids: resources.iter().map(|r| r.id).collect(),
            module_ids: modules.iter().map(|m| m.id).collect(),
            x,
            objective,
            unassigned,
        }
    }

    /// Resource id hosting `module_id`, if any.
    pub fn host_of(&self, module_id: u32) -> Option<u32> {
        let j = self.module_ids.iter().position(|&m| m == module_id)?;
        self.x
            .iter()
            .position(|row| row.get(j) == Some(&1))
            .map(|i| self.resource_ids[i])
    }

    pub fn assigned_count(&self) -> usize {
        self.x.iter().flatten().filter(|&&v| v == 1).count()
    }

    fn choice(&self) -> Vec<Option<usize>> {
        (0..self.module_ids.len())
            .map(|j| self.x.iter().position(|row| row[j] == 1))
            .collect()
    }
}

/// `max bandwidth` over the instance, used to normalize bandwidth.
fn max_bandwidth(resources: &[EdgeResource]) -> f64 {
    resources
        .iter()
        .map(|r| r.bandwidth)
        .fold(0.0, f64::max)
}

/// `(w_bw·bandwidth/max_bandwidth + w_cpu·compute_rating)·(1 + intensity)`.
pub fn affinity(
    module: &ControlModule,
    resource: &EdgeResource,
    weights: &AffinityWeights,
    max_bandwidth: f64,
) -> f64 {
    let bw = if max_bandwidth > 0.0 {
        resource.bandwidth / max_bandwidth
    } else {
        0.0
    };
    (weights.bandwidth * bw + weights.compute * resource.compute_rating) * (1.0 + module.intensity)
}

/// Affinity matrix indexed `[resource][module]`.
pub fn affinity_matrix(
    modules: &[ControlModule],
    resources: &[EdgeResource],
    weights: &AffinityWeights,
) -> Vec<Vec<f64>> {
    let max_bw = max_bandwidth(resources);
    resources
        .iter()
        .map(|r| modules.iter().map(|m| affinity(m, r, weights, max_bw)).collect())
        .collect()
}

fn validate_instance(
    modules: &[ControlModule],
    resources: &[EdgeResource],
) -> Result<(), AllocError> {
    for m in modules {
        if !(m.load > 0.0 && m.load.is_finite()) {
            return Err(AllocError::Instance(format!("module {} has non-positive load", m.id)));
        }
        if !(m.intensity >= 0.0 && m.intensity <= 1.0) {
            return Err(AllocError::Instance(format!(
                "module {} intensity outside [0,1]",
                m.id
            )));
        }
    }
    for r in resources {
        if !(r.capacity >= 0.0 && r.current_load >= 0.0 && r.bandwidth >= 0.0) {
            return Err(AllocError::Instance(format!(
                "resource {} has a negative capacity, load or bandwidth",
                r.id
            )));
        }
        if !(r.compute_rating >= 0.0 && r.compute_rating <= 1.0) {
            return Err(AllocError::Instance(format!(
                "resource {} compute_rating outside [0,1]",
                r.id
            )));
        }
    }
    let mut ids: Vec<u32> = modules.iter().map(|m| m.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(AllocError::Instance("duplicate module id".into()));
    }
    let mut ids: Vec<u32> = resources.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(AllocError::Instance("duplicate resource id".into()));
    }
    Ok(())
}

fn fits(load: f64, residual: f64) -> bool {
    load <= residual + TIE_EPS * residual.abs().max(1.0)
}

/// `(n+1)^m`, saturating.
pub fn enumeration_size(n_resources: usize, n_modules: usize) -> u64 {
    (n_resources as u64 + 1).saturating_pow(n_modules.min(u32::MAX as usize) as u32)
}

pub fn solve_exact(
    modules: &[ControlModule],
    resources: &[EdgeResource],
    weights: &AffinityWeights,
) -> Result<AssignmentPlan, AllocError> {
    solve_exact_with_limit(modules, resources, weights, DEFAULT_ENUMERATION_LIMIT)
}

pub fn solve_exact_with_limit(
    modules: &[ControlModule],
    resources: &[EdgeResource],
    weights: &AffinityWeights,
    limit: u64,
) -> Result<AssignmentPlan, AllocError> {
    weights.validate()?;
    validate_instance(modules, resources)?;
    let aff = affinity_matrix(modules, resources, weights);
    let choice = exact_choice(&aff, modules, resources, limit, None)?;
    Ok(AssignmentPlan::from_choice(resources, modules, &choice, &aff))
}

/// Exhaustive search over an explicit affinity matrix (`[resource][module]`).
/// Among optimal plans the row-major `x` that is lexicographically smallest
/// wins.
pub fn solve_exact_matrix(
    affinity: &[Vec<f64>],
    modules: &[ControlModule],
    resources: &[EdgeResource],
    limit: u64,
) -> Result<AssignmentPlan, AllocError> {
    validate_instance(modules, resources)?;
    let choice = exact_choice(affinity, modules, resources, limit, None)?;
    Ok(AssignmentPlan::from_choice(resources, modules, &choice, affinity))
}

struct Search<'a> {
    aff: &'a [Vec<f64>],
    loads: Vec<f64>,
    // Optimistic remaining value from module j onward.
    suffix_bound: Vec<f64>,
    prefer: Option<&'a [Option<usize>]>,
    n: usize,
    residual: Vec<f64>,
    current: Vec<Option<usize>>,
    best: Option<(f64, Vec<Option<usize>>)>,
}

impl Search<'_> {
    fn objective(&self, choice: &[Option<usize>]) -> f64 {
        choice
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.map(|i| self.aff[i][j]))
            .sum()
    }

    fn kept(&self, choice: &[Option<usize>]) -> usize {
        match self.prefer {
            Some(p) => choice
                .iter()
                .zip(p)
                .filter(|(c, p)| c.is_some() && c == p)
                .count(),
            None => 0,
        }
    }

    /// Row-major x flattened: resource i's row first.
    fn x_key(&self, choice: &[Option<usize>]) -> Vec<u8> {
        let m = choice.len();
        let mut key = vec![0u8; self.n * m];
        for (j, c) in choice.iter().enumerate() {
            if let Some(i) = c {
                key[i * m + j] = 1;
            }
        }
        key
    }

    fn better(&self, cand: &[Option<usize>], obj: f64, best: &[Option<usize>], best_obj: f64) -> bool {
        let tol = TIE_EPS * best_obj.abs().max(1.0);
        if obj > best_obj + tol {
            return true;
        }
        if obj < best_obj - tol {
            return false;
        }
        match self.kept(cand).cmp(&self.kept(best)) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.x_key(cand) < self.x_key(best),
        }
    }

    fn dfs(&mut self, j: usize, partial: f64) {
        let m = self.loads.len();
        if let Some((best_obj, _)) = &self.best {
            let tol = TIE_EPS * best_obj.abs().max(1.0);
            if partial + self.suffix_bound[j] < *best_obj - tol {
                return;
            }
        }
        if j == m {
            let obj = self.objective(&self.current);
            let replace = match &self.best {
                None => true,
                Some((best_obj, best)) => self.better(&self.current, obj, best, *best_obj),
            };
            if replace {
                self.best = Some((obj, self.current.clone()));
            }
            return;
        }
        // Unassigned first, then resources in index order.
        self.current[j] = None;
        self.dfs(j + 1, partial);
        for i in 0..self.n {
            if fits(self.loads[j], self.residual[i]) {
                self.residual[i] -= self.loads[j];
                self.current[j] = Some(i);
                self.dfs(j + 1, partial + self.aff[i][j]);
                self.residual[i] += self.loads[j];
            }
        }
        self.current[j] = None;
    }
}

fn exact_choice(
    aff: &[Vec<f64>],
    modules: &[ControlModule],
    resources: &[EdgeResource],
    limit: u64,
    prefer: Option<&[Option<usize>]>,
) -> Result<Vec<Option<usize>>, AllocError> {
    let n = resources.len();
    let m = modules.len();
    let count = enumeration_size(n, m);
    if count > limit {
        return Err(AllocError::TooLarge { count, limit });
    }
    if aff.len() != n || aff.iter().any(|row| row.len() != m) {
        return Err(AllocError::Instance("affinity matrix shape mismatch".into()));
    }
    let mut suffix_bound = vec![0.0; m + 1];
    for j in (0..m).rev() {
        let best = (0..n).map(|i| aff[i][j]).fold(0.0, f64::max);
        suffix_bound[j] = suffix_bound[j + 1] + best;
    }
    let mut search = Search {
        aff,
        loads: modules.iter().map(|c| c.load).collect(),
        suffix_bound,
        prefer,
        n,
        residual: resources.iter().map(EdgeResource::residual).collect(),
        current: vec![None; m],
        best: None,
    };
    search.dfs(0, 0.0);
    Ok(search.best.map(|(_, c)| c).unwrap_or_else(|| vec![None; m]))
}

/// Modules by load descending (ties by id), each onto the feasible resource
/// of highest affinity (ties by resource order). Unplaceable modules stay
/// unassigned.
pub fn solve_greedy(
    modules: &[ControlModule],
    resources: &[EdgeResource],
    weights: &AffinityWeights,
) -> Result<AssignmentPlan, AllocError> {
    weights.validate()?;
    validate_instance(modules, resources)?;
    let aff = affinity_matrix(modules, resources, weights);
    let choice = greedy_choice(&aff, modules, resources, vec![None; modules.len()]);
    Ok(AssignmentPlan::from_choice(resources, modules, &choice, &aff))
}

fn greedy_order(modules: &[ControlModule]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..modules.len()).collect();
    order.sort_by(|&a, &b| {
        modules[b]
            .load
            .total_cmp(&modules[a].load)
            .then(modules[a].id.cmp(&modules[b].id))
    });
    order
}

/// Greedy fill starting from `seed`, whose placements are kept as-is.
fn greedy_choice(
    aff: &[Vec<f64>],
    modules: &[ControlModule],
    resources: &[EdgeResource],
    seed: Vec<Option<usize>>,
) -> Vec<Option<usize>> {
    let mut residual: Vec<f64> = resources.iter().map(EdgeResource::residual).collect();
    for (j, c) in seed.iter().enumerate() {
        if let Some(i) = c {
            residual[*i] -= modules[j].load;
        }
    }
    let mut choice = seed;
    for j in greedy_order(modules) {
        if choice[j].is_some() {
            continue;
        }
        let mut pick: Option<usize> = None;
        for i in 0..resources.len() {
            if !fits(modules[j].load, residual[i]) {
                continue;
            }
            if pick.is_none_or(|p| aff[i][j] > aff[p][j]) {
                pick = Some(i);
            }
        }
        if let Some(i) = pick {
            residual[i] -= modules[j].load;
            choice[j] = Some(i);
        }
    }
    choice
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    Exact,
    Greedy,
}

/// Re-solves `plan` against updated resource figures. Resources missing from
/// `updated` are treated as withdrawn. Existing placements that stay feasible
/// are kept whenever doing so does not lower the objective.
pub fn rebalance(
    plan: &AssignmentPlan,
    modules: &[ControlModule],
    updated: &[EdgeResource],
    weights: &AffinityWeights,
    mode: SolverMode,
    limit: u64,
) -> Result<AssignmentPlan, AllocError> {
    weights.validate()?;
    validate_instance(modules, updated)?;
    let aff = affinity_matrix(modules, updated, weights);

    // Previous placements expressed in the new instance's indices.
    let old = plan.choice();
    let previous: Vec<Option<usize>> = modules
        .iter()
        .map(|m| {
            let j = plan.module_ids.iter().position(|&id| id == m.id)?;
            let rid = plan.resource_ids[old[j]?];
            updated.iter().position(|r| r.id == rid)
        })
        .collect();

    let use_exact = mode == SolverMode::Exact && enumeration_size(updated.len(), modules.len()) <= limit;
    let choice = if use_exact {
        exact_choice(&aff, modules, updated, limit, Some(&previous))?
    } else {
        let fresh = greedy_choice(&aff, modules, updated, vec![None; modules.len()]);
        let sticky_seed = keep_feasible(&previous, modules, updated);
        let sticky = greedy_choice(&aff, modules, updated, sticky_seed);
        let value = |c: &[Option<usize>]| -> f64 {
            c.iter()
                .enumerate()
                .filter_map(|(j, i)| i.map(|i| aff[i][j]))
                .sum()
        };
        let (vs, vf) = (value(&sticky), value(&fresh));
        if vs >= vf - TIE_EPS * vf.abs().max(1.0) {
            sticky
        } else {
            fresh
        }
    };
    Ok(AssignmentPlan::from_choice(updated, modules, &choice, &aff))
}

/// Drops previous placements, in greedy order, once a resource runs out of room.
fn keep_feasible(
    previous: &[Option<usize>],
    modules: &[ControlModule],
    resources: &[EdgeResource],
) -> Vec<Option<usize>> {
    let mut residual: Vec<f64> = resources.iter().map(EdgeResource::residual).collect();
    let mut kept = vec![None; modules.len()];
    for j in greedy_order(modules) {
        if let Some(i) = previous[j] {
            if fits(modules[j].load, residual[i]) {
                residual[i] -= modules[j].load;
                kept[j] = Some(i);
            }
        }
    }
    kept
}

/// Constraint check; empty when both constraint families hold.
pub fn validate(
    plan: &AssignmentPlan,
    modules: &[ControlModule],
    resources: &[EdgeResource],
) -> Vec<Violation> {
    let mut out = Vec::new();
    if plan.x.len() != resources.len() || plan.x.iter().any(|row| row.len() != modules.len()) {
        out.push(Violation::Shape(format!(
            "x is not {}x{}",
            resources.len(),
            modules.len()
        )));
        return out;
    }
    for (j, m) in modules.iter().enumerate() {
        let count = plan.x.iter().filter(|row| row[j] != 0).count();
        if count > 1 {
            out.push(Violation::MultipleAssignment {
                module_id: m.id,
                count,
            });
        }
    }
    for (i, r) in resources.iter().enumerate() {
        let load = r.current_load
            + modules
                .iter()
                .enumerate()
                .filter(|(j, _)| plan.x[i][*j] != 0)
                .map(|(_, m)| m.load)
                .sum::<f64>();
        if load > r.capacity + TIE_EPS * r.capacity.abs().max(1.0) {
            out.push(Violation::CapacityExceeded {
                resource_id: r.id,
                load,
                capacity: r.capacity,
            });
        }
    }
    out
}

/// JSON shape read by `alloc --instance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocInstance {
    pub resources: Vec<EdgeResource>,
    pub modules: Vec<ControlModule>,
    #[serde(default)]
    pub weights: AffinityWeights,
    #[serde(default = "default_mode")]
    pub mode: SolverMode,
}

fn default_mode() -> SolverMode {
    SolverMode::Exact
}

impl AllocInstance {
    pub fn solve(&self) -> Result<AssignmentPlan, AllocError> {
        match self.mode {
            SolverMode::Exact => solve_exact(&self.modules, &self.resources, &self.weights),
            SolverMode::Greedy => solve_greedy(&self.modules, &self.resources, &self.weights),
        }
    }
}
