//! Objective, analytic gradients and the alternating descent loop.
//!
//! The minimised objective is
//!
//! ```text
//! J = α Σ_t ‖w_{t+1} − w_t‖₂
//!   + Σ_pairs max(2 L(s⁺) + γ − L(s⁻_e) − β L(s⁻_r), 0)
//!   + ξ Σ_t (‖w_t‖₂ − 1)²
//!   + ξ Σ_entities (‖e‖₂ − 1)² + ξ Σ_relations (‖ℓ‖₂ − 1)²
//! ```
//!
//! with `L` the projected triple residual under the *raw* hyperplane `w_t`.
//! Every outer iteration takes one gradient step on all hyperplanes with the
//! embeddings fixed, then one step on the embeddings with the hyperplanes
//! fixed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{TemporalGraph, Triple};
use crate::error::{Error, Result};
use crate::model::{self, dot, l2_norm, norm_of, residual_into, HyperParams, ModelState, Norm, Table};
use crate::sampler::{build_constraints, ConstraintPair, Constraints, SamplerConfig};

/// Training variant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    /// Smoothness and relation negatives.
    #[default]
    Rtge,
    /// Smoothness only: β = 0, no relation negatives.
    RtgeS,
    /// Relation negatives only: α = 0.
    RtgeN,
    /// Independent hyperplanes, entity negatives only: α = β = 0.
    Hyte,
    /// One identity hyperplane (`w = 0`, never updated); all bins collapsed.
    Transe,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Rtge, Mode::RtgeS, Mode::RtgeN, Mode::Hyte, Mode::Transe];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Rtge => "rtge",
            Mode::RtgeS => "rtge-s",
            Mode::RtgeN => "rtge-n",
            Mode::Hyte => "hyte",
            Mode::Transe => "transe",
        }
    }

    /// Hyperparameters with the mode's forced zeros applied.
    pub fn effective(self, hp: &HyperParams) -> HyperParams {
        let mut hp = hp.clone();
        match self {
            Mode::Rtge => {}
            Mode::RtgeS => hp.beta = 0.0,
            Mode::RtgeN => hp.alpha = 0.0,
            Mode::Hyte | Mode::Transe => {
                hp.alpha = 0.0;
                hp.beta = 0.0;
            }
        }
        hp
    }

    pub fn uses_relation_negatives(self) -> bool {
        matches!(self, Mode::Rtge | Mode::RtgeN)
    }

    pub fn learns_hyperplanes(self) -> bool {
        self != Mode::Transe
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let key = key.strip_suffix("-baseline").unwrap_or(&key);
        match key {
            "rtge" => Ok(Mode::Rtge),
            "rtge-s" => Ok(Mode::RtgeS),
            "rtge-n" => Ok(Mode::RtgeN),
            "hyte" => Ok(Mode::Hyte),
            "transe" => Ok(Mode::Transe),
            _ => Err(Error::InvalidHyperParam(format!("unknown mode `{s}`"))),
        }
    }
}

/// Objective value with its components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    /// Σ hinge terms.
    pub task: f64,
    /// α · smoothness.
    pub smooth: f64,
    /// ξ · all norm penalties.
    pub penalty: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Entry 0 is the objective at initialization, entry `i` after iteration `i`.
    pub history: Vec<ObjectiveBreakdown>,
    pub iterations: usize,
    pub converged: bool,
    pub relaxations: usize,
    pub num_constraints: usize,
}

impl TrainReport {
    pub fn initial(&self) -> Option<f64> {
        self.history.first().map(|o| o.total)
    }

    pub fn last(&self) -> Option<f64> {
        self.history.last().map(|o| o.total)
    }
}

/// Gradients share the parameter layout.
pub type Gradient = ModelState;

/// Σ_t ‖w_{t+1} − w_t‖₂; zero for a single bin.
pub fn smoothness_loss(hyperplanes: &Table) -> f64 {
    (1..hyperplanes.rows())
        .map(|t| {
            let (a, b) = (hyperplanes.row(t - 1), hyperplanes.row(t));
            a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt()
        })
        .sum()
}

fn loss_of(state: &ModelState, triple: &Triple, w: &[f64], norm: Norm, buf: &mut [f64]) -> f64 {
    residual_into(
        state.entities.row(triple.head),
        state.relations.row(triple.relation),
        state.entities.row(triple.tail),
        w,
        buf,
    );
    norm_of(buf, norm)
}

/// `2L(s⁺) + γ − L(s⁻_e) − β L(s⁻_r)` before clamping.
fn margin(pair: &ConstraintPair, state: &ModelState, hp: &HyperParams, bufs: &mut Buffers) -> f64 {
    let w = state.hyperplanes.row(pair.bin);
    let lp = loss_of(state, &pair.positive, w, hp.norm, &mut bufs.pos);
    let le = loss_of(state, &pair.entity_negative, w, hp.norm, &mut bufs.ent);
    let mut m = 2.0 * lp + hp.gamma - le;
    if let Some(neg) = relation_term(pair, hp) {
        m -= hp.beta * loss_of(state, &neg, w, hp.norm, &mut bufs.rel);
    }
    m
}

fn relation_term(pair: &ConstraintPair, hp: &HyperParams) -> Option<Triple> {
    pair.relation_negative.filter(|_| hp.beta != 0.0)
}

/// `max(2L(s⁺) + γ − L(s⁻_e) − β L(s⁻_r), 0)` with the raw hyperplane.
pub fn hinge_term(pair: &ConstraintPair, state: &ModelState, hp: &HyperParams) -> f64 {
    let mut bufs = Buffers::new(state.dim());
    margin(pair, state, hp, &mut bufs).max(0.0)
}

fn penalty_sum(table: &Table) -> f64 {
    table.iter_rows().map(|r| (l2_norm(r) - 1.0).powi(2)).sum()
}

/// Full objective over the given constraint pairs.
pub fn objective(state: &ModelState, pairs: &[ConstraintPair], hp: &HyperParams) -> ObjectiveBreakdown {
    let mut bufs = Buffers::new(state.dim());
    let task: f64 = pairs.iter().map(|p| margin(p, state, hp, &mut bufs).max(0.0)).sum();
    let smooth = hp.alpha * smoothness_loss(&state.hyperplanes);
    let penalty = hp.xi
        * (penalty_sum(&state.hyperplanes) + penalty_sum(&state.entities) + penalty_sum(&state.relations));
    ObjectiveBreakdown { total: smooth + task + penalty, task, smooth, penalty }
}

struct Buffers {
    pos: Vec<f64>,
    ent: Vec<f64>,
    rel: Vec<f64>,
    e: Vec<f64>,
}

impl Buffers {
    fn new(d: usize) -> Self {
        Buffers { pos: vec![0.0; d], ent: vec![0.0; d], rel: vec![0.0; d], e: vec![0.0; d] }
    }
}

/// Which parameter blocks to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Blocks {
    pub hyperplanes: bool,
    pub embeddings: bool,
}

impl Blocks {
    pub const ALL: Blocks = Blocks { hyperplanes: true, embeddings: true };
    pub const HYPERPLANES: Blocks = Blocks { hyperplanes: true, embeddings: false };
    pub const EMBEDDINGS: Blocks = Blocks { hyperplanes: false, embeddings: true };
}

/// Adds `coeff · ∇L` for one triple whose residual is already in `u`.
///
/// With `v = h + ℓ − ζ`, `u = v − (wᵀv) w` and `e = ∂‖u‖/∂u`:
/// `∂L/∂h = ∂L/∂ℓ = −∂L/∂ζ = e − (wᵀe) w` and
/// `∂L/∂w = −(eᵀw) v − (wᵀv) e`.
#[allow(clippy::too_many_arguments)]
fn add_loss_gradient(
    state: &ModelState,
    triple: &Triple,
    bin: usize,
    u: &[f64],
    loss: f64,
    coeff: f64,
    norm: Norm,
    blocks: Blocks,
    e: &mut [f64],
    grad: &mut Gradient,
) {
    if loss == 0.0 {
        return;
    }
    match norm {
        Norm::L2 => e.iter_mut().zip(u).for_each(|(ei, ui)| *ei = ui / loss),
        Norm::L1 => e.iter_mut().zip(u).for_each(|(ei, ui)| {
            *ei = if *ui > 0.0 {
                1.0
            } else if *ui < 0.0 {
                -1.0
            } else {
                0.0
            }
        }),
    }
    let w = state.hyperplanes.row(bin);
    let h = state.entities.row(triple.head);
    let l = state.relations.row(triple.relation);
    let z = state.entities.row(triple.tail);
    let we = dot(w, e);
    if blocks.embeddings {
        for i in 0..w.len() {
            let g = coeff * (e[i] - we * w[i]);
            grad.entities.row_mut(triple.head)[i] += g;
            grad.relations.row_mut(triple.relation)[i] += g;
            grad.entities.row_mut(triple.tail)[i] -= g;
        }
    }
    if blocks.hyperplanes {
        let wv = dot(w, h) + dot(w, l) - dot(w, z);
        let gw = grad.hyperplanes.row_mut(bin);
        for i in 0..gw.len() {
            let v = h[i] + l[i] - z[i];
            gw[i] += coeff * (-we * v - wv * e[i]);
        }
    }
}

fn add_penalty_gradient(table: &Table, xi: f64, out: &mut Table) {
    if xi == 0.0 {
        return;
    }
    for i in 0..table.rows() {
        let row = table.row(i);
        let n = l2_norm(row);
        if n > 0.0 {
            let scale = 2.0 * xi * (n - 1.0) / n;
            out.row_mut(i).iter_mut().zip(row).for_each(|(g, x)| *g += scale * x);
        }
    }
}

/// Subgradient of [`objective`] for the selected blocks; unselected blocks
/// are returned as zeros.
///
/// The hinge contributes only where it is strictly positive. Zero-length
/// smoothness differences and zero residuals contribute nothing.
pub fn gradients_for(
    state: &ModelState,
    pairs: &[ConstraintPair],
    hp: &HyperParams,
    blocks: Blocks,
) -> Gradient {
    let d = state.dim();
    let mut grad = ModelState {
        entities: Table::zeros(state.num_entities(), d),
        relations: Table::zeros(state.num_relations(), d),
        hyperplanes: Table::zeros(state.num_bins(), d),
    };
    let mut bufs = Buffers::new(d);
    for pair in pairs {
        if margin(pair, state, hp, &mut bufs) <= 0.0 {
            continue;
        }
        let Buffers { pos, ent, rel, e } = &mut bufs;
        let lp = norm_of(pos, hp.norm);
        add_loss_gradient(state, &pair.positive, pair.bin, pos, lp, 2.0, hp.norm, blocks, e, &mut grad);
        let le = norm_of(ent, hp.norm);
        add_loss_gradient(state, &pair.entity_negative, pair.bin, ent, le, -1.0, hp.norm, blocks, e, &mut grad);
        if let Some(neg) = relation_term(pair, hp) {
            let lr = norm_of(rel, hp.norm);
            add_loss_gradient(state, &neg, pair.bin, rel, lr, -hp.beta, hp.norm, blocks, e, &mut grad);
        }
    }
    if blocks.hyperplanes {
        if hp.alpha != 0.0 {
            let w = &state.hyperplanes;
            for t in 1..w.rows() {
                let diff: Vec<f64> = w.row(t).iter().zip(w.row(t - 1)).map(|(a, b)| a - b).collect();
                let n = l2_norm(&diff);
                if n > 0.0 {
                    for i in 0..d {
                        let g = hp.alpha * diff[i] / n;
                        grad.hyperplanes.row_mut(t)[i] += g;
                        grad.hyperplanes.row_mut(t - 1)[i] -= g;
                    }
                }
            }
        }
        add_penalty_gradient(&state.hyperplanes, hp.xi, &mut grad.hyperplanes);
    }
    if blocks.embeddings {
        add_penalty_gradient(&state.entities, hp.xi, &mut grad.entities);
        add_penalty_gradient(&state.relations, hp.xi, &mut grad.relations);
    }
    grad
}

/// Subgradient of [`objective`] with respect to every parameter.
pub fn gradients(state: &ModelState, pairs: &[ConstraintPair], hp: &HyperParams) -> Gradient {
    gradients_for(state, pairs, hp, Blocks::ALL)
}

fn descend(param: &mut Table, grad: &Table, psi: f64) {
    param.as_mut_slice().iter_mut().zip(grad.as_slice()).for_each(|(p, g)| *p -= psi * g);
}

/// Everything `fit` needs besides the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hp: HyperParams,
    pub mode: Mode,
    pub seed: u64,
    pub sampler: SamplerConfig,
    /// Pairs per step; 0 means full batch.
    pub batch_size: usize,
    /// Redraw the negatives before every iteration instead of once per run.
    pub resample_each_iteration: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hp: HyperParams::default(),
            mode: Mode::Rtge,
            seed: 0,
            sampler: SamplerConfig::default(),
            batch_size: 0,
            resample_each_iteration: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub state: ModelState,
    pub report: TrainReport,
}

fn sampler_seed(seed: u64, iteration: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add((iteration as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// The graph a mode trains on (collapsed to one bin for the static baseline).
pub fn training_graph(graph: &TemporalGraph, mode: Mode) -> std::borrow::Cow<'_, TemporalGraph> {
    if mode == Mode::Transe {
        std::borrow::Cow::Owned(graph.collapsed())
    } else {
        std::borrow::Cow::Borrowed(graph)
    }
}

/// The initial state `fit` starts from for this graph, mode and seed.
pub fn initial_state(graph: &TemporalGraph, config: &TrainConfig) -> Result<ModelState> {
    let bins = if config.mode == Mode::Transe { 1 } else { graph.num_bins() };
    let mut state =
        model::init(graph.num_entities(), graph.num_relations(), bins, &config.hp, config.seed)?;
    if !config.mode.learns_hyperplanes() {
        state.hyperplanes.as_mut_slice().fill(0.0);
    }
    Ok(state)
}

/// Samples constraints once, then alternates hyperplane and embedding steps
/// until `|ΔJ| < ε` or `κ` iterations.
pub fn fit(graph: &TemporalGraph, config: &TrainConfig) -> Result<Trained> {
    let state = initial_state(graph, config)?;
    fit_from(graph, config, state)
}

/// [`fit`] from a given starting state.
pub fn fit_from(graph: &TemporalGraph, config: &TrainConfig, mut state: ModelState) -> Result<Trained> {
    config.hp.validate()?;
    let mode = config.mode;
    let hp = mode.effective(&config.hp);
    let graph = training_graph(graph, mode);
    if state.num_bins() != graph.num_bins()
        || state.num_entities() != graph.num_entities()
        || state.num_relations() != graph.num_relations()
        || state.dim() != hp.d
    {
        return Err(Error::ShapeMismatch("initial state does not match graph/hyperparameters".into()));
    }
    let with_relations = mode.uses_relation_negatives() && hp.beta > 0.0;
    let sample = |iteration| {
        build_constraints(&graph, hp.m, with_relations, config.sampler, sampler_seed(config.seed, iteration))
    };
    let mut constraints: Constraints = sample(0)?;
    let mut relaxations = constraints.relaxations;

    let mut current = objective(&state, &constraints.pairs, &hp);
    if !current.total.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let mut report = TrainReport {
        history: vec![current],
        num_constraints: constraints.len(),
        ..Default::default()
    };
    let mut order: Vec<usize> = Vec::new();
    let mut batch: Vec<ConstraintPair> = Vec::new();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5851_F42D_4C95_7F2D);

    for iteration in 1..=hp.kappa {
        if config.resample_each_iteration && iteration > 1 {
            constraints = sample(iteration)?;
            relaxations += constraints.relaxations;
        }
        if config.batch_size == 0 || config.batch_size >= constraints.len() {
            step(&mut state, &constraints.pairs, &hp, mode);
        } else {
            order.clear();
            order.extend(0..constraints.len());
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(config.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| constraints.pairs[i]));
                step(&mut state, &batch, &hp, mode);
            }
        }
        let next = objective(&state, &constraints.pairs, &hp);
        if !next.total.is_finite() || !state.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        report.history.push(next);
        report.iterations = iteration;
        if (next.total - current.total).abs() < hp.epsilon {
            report.converged = true;
            break;
        }
        current = next;
    }
    report.relaxations = relaxations;
    report.num_constraints = constraints.len();
    Ok(Trained { state, report })
}

fn step(state: &mut ModelState, pairs: &[ConstraintPair], hp: &HyperParams, mode: Mode) {
    if mode.learns_hyperplanes() {
        let g = gradients_for(state, pairs, hp, Blocks::HYPERPLANES);
        descend(&mut state.hyperplanes, &g.hyperplanes, hp.psi);
    }
    let g = gradients_for(state, pairs, hp, Blocks::EMBEDDINGS);
    descend(&mut state.entities, &g.entities, hp.psi);
    descend(&mut state.relations, &g.relations, hp.psi);
}
