//! Monte-Carlo Tree Search over the grammar's action space.
//!
//! Nodes are design graphs; edges are grammar actions. Selection uses UCB
//! with unvisited edges tried first, rollouts apply uniformly random valid
//! actions to a terminal design, and backpropagation keeps per-edge maxima
//! (Q is the best normalized episode reward seen through the edge; a mean
//! mode is available for comparison). Terminal designs are memoized by their
//! canonical serialization, so revisiting a design never re-simulates it.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{init_graph, serialize, Action, DesignGraph, Grammar};
use crate::mechanism::{compile, PhysicalParams};
use crate::reward::{evaluate_design_observed, DesignReward, EvalError, EvaluationSetup};
use crate::sim::SimTrace;

/// How edge values absorb episode rewards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackpropMode {
    /// Q is the maximum episode value through the edge.
    #[default]
    Max,
    /// Q is the mean episode value through the edge.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub iterations: usize,
    pub exploration_c: f64,
    pub seed: u64,
    /// How many best designs to keep in the result.
    pub top_k: usize,
    /// Episode rewards are divided by this before entering Q; when absent,
    /// the evaluator's theoretical maximum is used.
    pub reward_normalizer: Option<f64>,
    pub backprop: BackpropMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 1000,
            exploration_c: std::f64::consts::SQRT_2,
            seed: 0,
            top_k: 5,
            reward_normalizer: None,
            backprop: BackpropMode::Max,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.iterations == 0 {
            return Err(SearchError::Config("iterations must be positive".into()));
        }
        if !(self.exploration_c >= 0.0) {
            return Err(SearchError::Config(
                "exploration_c must be non-negative".into(),
            ));
        }
        if self.top_k == 0 {
            return Err(SearchError::Config("top_k must be positive".into()));
        }
        if let Some(n) = self.reward_normalizer {
            if !(n > 0.0) {
                return Err(SearchError::Config(
                    "reward_normalizer must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("grammar rejected the search setup: {0}")]
    Grammar(#[from] crate::grammar::GrammarError),
}

/// Anything that can score a terminal design graph.
pub trait Evaluator: Sync {
    fn evaluate(&self, design: &DesignGraph) -> Result<EvalOutcome, EvalError>;
    /// Theoretical maximum of `final_reward`, used to normalize into [0, 1].
    fn max_reward(&self) -> f64;
}

/// What an evaluator returns for one design.
#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub final_reward: f64,
    /// Full per-object report when the evaluator produces one.
    pub report: Option<DesignReward>,
}

/// The production evaluator: compile the graph, run the full simulation
/// sweep.
pub struct DesignEvaluator {
    pub physical: PhysicalParams,
    pub setup: EvaluationSetup,
    pub seed: u64,
    /// Optional tap on every simulation trace (called from worker threads).
    pub observer: Option<Arc<dyn Fn(&SimTrace) + Send + Sync>>,
}

impl Evaluator for DesignEvaluator {
    fn evaluate(&self, design: &DesignGraph) -> Result<EvalOutcome, EvalError> {
        let spec = compile(design, &self.physical)
            .map_err(|e| EvalError::Config(format!("design does not compile: {e}")))?;
        let report = evaluate_design_observed(
            &spec,
            &self.setup,
            self.seed,
            self.observer.as_ref().map(|o| o.as_ref() as &(dyn Fn(&SimTrace) + Sync)),
        )?;
        Ok(EvalOutcome {
            final_reward: report.final_reward,
            report: Some(report),
        })
    }

    fn max_reward(&self) -> f64 {
        self.setup.max_final_reward()
    }
}

/// Synthetic objective for tests and benchmarks: one point per phalanx. Its
/// optimum is the fully grown gripper, known by construction.
pub struct PhalanxCountEvaluator {
    pub max_fingers: usize,
    pub max_phalanges: usize,
}

impl Evaluator for PhalanxCountEvaluator {
    fn evaluate(&self, design: &DesignGraph) -> Result<EvalOutcome, EvalError> {
        let phalanges = design
            .nodes()
            .filter(|(_, k)| matches!(k, crate::grammar::NodeKind::LinkT { .. }))
            .count();
        Ok(EvalOutcome {
            final_reward: phalanges as f64,
            report: None,
        })
    }

    fn max_reward(&self) -> f64 {
        (self.max_fingers * self.max_phalanges) as f64
    }
}

/// UCB selection score. Unvisited edges are infinitely attractive and are
/// therefore tried before any visited edge.
pub fn ucb_score(q: f64, n_a: u64, parent_n: u64, c: f64) -> f64 {
    if n_a == 0 {
        return f64::INFINITY;
    }
    q + c * ((parent_n as f64).ln() / n_a as f64).sqrt()
}

#[derive(Clone, Debug)]
pub struct SearchEdge {
    pub action: Action,
    pub n_a: u64,
    /// Normalized edge value per the backprop mode.
    pub q: f64,
    sum_value: f64,
    pub child: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SearchNode {
    pub graph: DesignGraph,
    /// Rule applications from the initial graph to this node.
    pub depth: usize,
    pub n: u64,
    pub edges: Vec<SearchEdge>,
}

/// One selection + expansion + rollout + backprop pass.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub iteration: usize,
    /// Edge actions from the root to the rollout leaf.
    pub path: Vec<Action>,
    /// Normalized episode value in [0, 1].
    pub value: f64,
    pub raw_reward: f64,
    /// Canonical serialization of the rolled-out terminal design.
    pub design_key: String,
    pub failed: bool,
}

/// One row of the per-iteration trace.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub episode_reward: f64,
    pub best_reward: f64,
    /// max_a Q(root, a), normalized.
    pub v_root: f64,
    /// Mean Q over all visited edges of the tree, normalized.
    pub mean_q: f64,
    /// Raw reward of the greedy test run; absent when the greedy descent hit
    /// an unexpanded node.
    pub test_run_reward: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RankedDesign {
    pub graph: DesignGraph,
    pub reward: f64,
    pub report: Option<DesignReward>,
    /// Iteration at which this design was first evaluated.
    pub first_iteration: usize,
}

pub struct SearchResult {
    pub top: Vec<RankedDesign>,
    pub trace: Vec<IterationRecord>,
    pub episodes: Vec<EpisodeRecord>,
    pub tree: SearchTree,
}

enum CachedEval {
    Ok(EvalOutcome),
    Failed(String),
}

struct CacheEntry {
    graph: DesignGraph,
    eval: CachedEval,
    first_iteration: usize,
}

/// The search tree plus everything iteration needs: grammar, RNG, memo.
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
    grammar: Grammar,
    exploration_c: f64,
    normalizer: f64,
    backprop: BackpropMode,
    rng: ChaCha8Rng,
    cache: HashMap<String, CacheEntry>,
    iteration: usize,
}

impl SearchTree {
    pub fn new(grammar: Grammar, cfg: &SearchConfig, normalizer: f64) -> Self {
        let root_graph = init_graph();
        let edges = grammar
            .applicable_actions(&root_graph, 0)
            .into_iter()
            .map(|action| SearchEdge {
                action,
                n_a: 0,
                q: 0.0,
                sum_value: 0.0,
                child: None,
            })
            .collect();
        SearchTree {
            nodes: vec![SearchNode {
                graph: root_graph,
                depth: 0,
                n: 0,
                edges,
            }],
            grammar,
            exploration_c: cfg.exploration_c,
            normalizer,
            backprop: cfg.backprop,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cache: HashMap::new(),
            iteration: 0,
        }
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[0]
    }

    /// Designs whose evaluation failed, with the error text.
    pub fn failures(&self) -> Vec<(&str, &str)> {
        self.cache
            .iter()
            .filter_map(|(key, entry)| match &entry.eval {
                CachedEval::Failed(reason) => Some((key.as_str(), reason.as_str())),
                CachedEval::Ok(_) => None,
            })
            .collect()
    }

    fn select_edge(&self, node: usize) -> usize {
        let n = &self.nodes[node];
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, e) in n.edges.iter().enumerate() {
            let score = ucb_score(e.q, e.n_a, n.n, self.exploration_c);
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }

    fn make_node(&mut self, graph: DesignGraph, depth: usize) -> usize {
        let edges = self
            .grammar
            .applicable_actions(&graph, depth)
            .into_iter()
            .map(|action| SearchEdge {
                action,
                n_a: 0,
                q: 0.0,
                sum_value: 0.0,
                child: None,
            })
            .collect();
        self.nodes.push(SearchNode {
            graph,
            depth,
            n: 0,
            edges,
        });
        self.nodes.len() - 1
    }

    fn evaluate_cached(
        &mut self,
        design: &DesignGraph,
        evaluator: &dyn Evaluator,
    ) -> (String, f64, bool) {
        let key = serialize(design);
        if !self.cache.contains_key(&key) {
            let eval = match evaluator.evaluate(design) {
                Ok(outcome) => CachedEval::Ok(outcome),
                Err(e) => CachedEval::Failed(e.to_string()),
            };
            self.cache.insert(
                key.clone(),
                CacheEntry {
                    graph: design.clone(),
                    eval,
                    first_iteration: self.iteration,
                },
            );
        }
        match &self.cache[&key].eval {
            CachedEval::Ok(outcome) => (key, outcome.final_reward, false),
            CachedEval::Failed(_) => (key, 0.0, true),
        }
    }

    /// Runs one MCTS iteration: select by UCB to a leaf, expand one untried
    /// action, roll out randomly to a terminal design, evaluate it (memoized)
    /// and propagate the normalized value back up with `n_a += 1`,
    /// `Q = max(Q, value)` (or the running mean), `n += 1` per node.
    pub fn iterate(&mut self, evaluator: &dyn Evaluator) -> EpisodeRecord {
        self.iteration += 1;
        let mut path_edges: Vec<(usize, usize)> = Vec::new();
        let mut current = 0;

        let leaf = if self.nodes[0].n == 0 {
            // Fresh root: its first visit rolls out from the root itself.
            0
        } else {
            loop {
                if self.nodes[current].edges.is_empty() {
                    break current; // terminal leaf: nothing to expand
                }
                let edge_idx = self.select_edge(current);
                path_edges.push((current, edge_idx));
                match self.nodes[current].edges[edge_idx].child {
                    Some(child) => current = child,
                    None => {
                        // Expansion: instantiate the untried action's child.
                        let action = self.nodes[current].edges[edge_idx].action;
                        let graph = self
                            .grammar
                            .apply(&self.nodes[current].graph, &action)
                            .expect("tree edges hold applicable actions");
                        let depth = self.nodes[current].depth + 1;
                        let child = self.make_node(graph, depth);
                        self.nodes[current].edges[edge_idx].child = Some(child);
                        break child;
                    }
                }
            }
        };

        // Rollout to a terminal design and evaluate it.
        let (terminal, _) = self.grammar.random_rollout(
            &self.nodes[leaf].graph.clone(),
            self.nodes[leaf].depth,
            &mut self.rng,
        );
        let (design_key, raw_reward, failed) = self.evaluate_cached(&terminal, evaluator);
        let value = (raw_reward / self.normalizer).clamp(0.0, 1.0);

        // Backpropagation.
        for (node, edge_idx) in &path_edges {
            let edge = &mut self.nodes[*node].edges[*edge_idx];
            edge.n_a += 1;
            edge.sum_value += value;
            edge.q = match self.backprop {
                BackpropMode::Max => edge.q.max(value),
                BackpropMode::Mean => edge.sum_value / edge.n_a as f64,
            };
            self.nodes[*node].n += 1;
        }
        self.nodes[leaf].n += 1;

        EpisodeRecord {
            iteration: self.iteration,
            path: path_edges
                .iter()
                .map(|(n, e)| self.nodes[*n].edges[*e].action)
                .collect(),
            value,
            raw_reward,
            design_key,
            failed,
        }
    }

    /// Greedy descent by argmax Q over visited edges. Returns the reward of
    /// the terminal design it reaches (from the memo cache), or None when it
    /// runs into an unexpanded region.
    pub fn test_run(&mut self, evaluator: &dyn Evaluator) -> Option<f64> {
        let mut current = 0;
        loop {
            let node = &self.nodes[current];
            if node.edges.is_empty() {
                let graph = node.graph.clone();
                let (_, reward, failed) = self.evaluate_cached(&graph, evaluator);
                return if failed { None } else { Some(reward) };
            }
            let mut best: Option<(usize, f64)> = None;
            for (i, e) in node.edges.iter().enumerate() {
                if e.n_a == 0 {
                    continue;
                }
                if best.map_or(true, |(_, q)| e.q > q) {
                    best = Some((i, e.q));
                }
            }
            let Some((edge_idx, _)) = best else {
                return None;
            };
            match node.edges[edge_idx].child {
                Some(child) => current = child,
                None => return None,
            }
        }
    }

    pub fn v_root(&self) -> f64 {
        self.nodes[0]
            .edges
            .iter()
            .map(|e| e.q)
            .fold(0.0, f64::max)
    }

    /// Mean Q over all visited edges in the tree.
    pub fn mean_q(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for node in &self.nodes {
            for e in &node.edges {
                if e.n_a > 0 {
                    sum += e.q;
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    fn ranked_designs(&self, top_k: usize) -> Vec<RankedDesign> {
        let mut all: Vec<RankedDesign> = self
            .cache
            .values()
            .filter_map(|entry| match &entry.eval {
                CachedEval::Ok(outcome) => Some(RankedDesign {
                    graph: entry.graph.clone(),
                    reward: outcome.final_reward,
                    report: outcome.report.clone(),
                    first_iteration: entry.first_iteration,
                }),
                CachedEval::Failed(_) => None,
            })
            .collect();
        all.sort_by(|a, b| {
            b.reward
                .partial_cmp(&a.reward)
                .expect("rewards are finite")
                .then(a.first_iteration.cmp(&b.first_iteration))
        });
        all.truncate(top_k);
        all
    }
}

/// Runs a full search. `on_iteration` sees every trace row as it is
/// produced, so callers can stream it to disk and keep partial results on
/// interruption.
pub fn run_search(
    grammar: Grammar,
    cfg: &SearchConfig,
    evaluator: &dyn Evaluator,
    mut on_iteration: impl FnMut(&IterationRecord),
) -> Result<SearchResult, SearchError> {
    cfg.validate()?;
    let normalizer = match cfg.reward_normalizer {
        Some(n) => n,
        None => {
            let n = evaluator.max_reward();
            if !(n > 0.0) {
                return Err(SearchError::Config(
                    "evaluator reports a non-positive maximum reward".into(),
                ));
            }
            n
        }
    };

    let mut tree = SearchTree::new(grammar, cfg, normalizer);
    let mut episodes = Vec::with_capacity(cfg.iterations);
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut best = f64::NEG_INFINITY;

    for _ in 0..cfg.iterations {
        let episode = tree.iterate(evaluator);
        best = best.max(episode.raw_reward);
        let test_run_reward = tree.test_run(evaluator);
        let record = IterationRecord {
            iteration: episode.iteration,
            episode_reward: episode.raw_reward,
            best_reward: best,
            v_root: tree.v_root(),
            mean_q: tree.mean_q(),
            test_run_reward,
        };
        on_iteration(&record);
        trace.push(record);
        episodes.push(episode);
    }

    let top = tree.ranked_designs(cfg.top_k);
    Ok(SearchResult {
        top,
        trace,
        episodes,
        tree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{GrammarLimits, GrammarParams, PalmSide};
    use approx::assert_abs_diff_eq;

    fn toy_grammar() -> Grammar {
        Grammar::new(
            GrammarParams {
                lengths_m: vec![0.05],
                stiffnesses_nm_per_rad: vec![0.3],
                mount_sides: vec![PalmSide::Top],
                mount_offsets_m: vec![-0.03, 0.03],
                mount_angles_deg: vec![0.0],
            },
            GrammarLimits {
                max_fingers: 2,
                max_phalanges: 3,
                min_fingers: 1,
                depth_cap: 20,
            },
        )
        .unwrap()
    }

    fn toy_evaluator() -> PhalanxCountEvaluator {
        PhalanxCountEvaluator {
            max_fingers: 2,
            max_phalanges: 3,
        }
    }

    #[test]
    fn ucb_examples() {
        assert!(ucb_score(0.3, 0, 10, 1.0).is_infinite());
        let v = ucb_score(0.5, 2, 10, std::f64::consts::SQRT_2);
        assert_abs_diff_eq!(v, 2.0175, epsilon = 1e-3);
        // C = 0 degenerates to greedy.
        assert_abs_diff_eq!(ucb_score(0.7, 3, 100, 0.0), 0.7);
    }

    #[test]
    fn first_iteration_only_visits_root() {
        let cfg = SearchConfig {
            iterations: 1,
            seed: 3,
            ..SearchConfig::default()
        };
        let mut tree = SearchTree::new(toy_grammar(), &cfg, 6.0);
        let ep = tree.iterate(&toy_evaluator());
        assert_eq!(tree.root().n, 1);
        assert!(ep.path.is_empty());
        assert!(tree.root().edges.iter().all(|e| e.n_a == 0));
        assert_eq!(tree.nodes.len(), 1);
    }

    #[test]
    fn visit_identity_holds_everywhere() {
        let cfg = SearchConfig {
            iterations: 120,
            seed: 9,
            ..SearchConfig::default()
        };
        let result =
            run_search(toy_grammar(), &cfg, &toy_evaluator(), |_| {}).unwrap();
        assert_eq!(result.tree.root().n, 120);
        for node in &result.tree.nodes {
            let edge_sum: u64 = node.edges.iter().map(|e| e.n_a).sum();
            if node.n > 0 {
                assert_eq!(node.n, edge_sum + 1);
            }
            for e in &node.edges {
                assert!(e.q >= 0.0 && e.q <= 1.0);
            }
        }
    }

    #[test]
    fn max_backprop_keeps_edge_maxima() {
        let cfg = SearchConfig {
            iterations: 150,
            seed: 42,
            ..SearchConfig::default()
        };
        let result = run_search(toy_grammar(), &cfg, &toy_evaluator(), |_| {}).unwrap();
        // Replay the episode log: every edge's Q must equal the max value
        // propagated through it.
        let mut expected: std::collections::HashMap<(usize, Action), f64> =
            std::collections::HashMap::new();
        for ep in &result.episodes {
            let mut node = 0;
            for action in &ep.path {
                let entry = expected.entry((node, *action)).or_insert(0.0);
                *entry = entry.max(ep.value);
                let edge = result.tree.nodes[node]
                    .edges
                    .iter()
                    .find(|e| e.action == *action)
                    .unwrap();
                node = edge.child.unwrap();
            }
        }
        for (node_idx, node) in result.tree.nodes.iter().enumerate() {
            for e in &node.edges {
                if e.n_a > 0 {
                    let want = expected[&(node_idx, e.action)];
                    assert_abs_diff_eq!(e.q, want, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn series_are_monotone() {
        let cfg = SearchConfig {
            iterations: 100,
            seed: 5,
            ..SearchConfig::default()
        };
        let result = run_search(toy_grammar(), &cfg, &toy_evaluator(), |_| {}).unwrap();
        for w in result.trace.windows(2) {
            assert!(w[1].best_reward >= w[0].best_reward);
            assert!(w[1].v_root >= w[0].v_root - 1e-12);
        }
    }

    #[test]
    fn search_is_reproducible() {
        let cfg = SearchConfig {
            iterations: 60,
            seed: 11,
            ..SearchConfig::default()
        };
        let a = run_search(toy_grammar(), &cfg, &toy_evaluator(), |_| {}).unwrap();
        let b = run_search(toy_grammar(), &cfg, &toy_evaluator(), |_| {}).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.top.len(), b.top.len());
        for (x, y) in a.top.iter().zip(&b.top) {
            assert_eq!(serialize(&x.graph), serialize(&y.graph));
        }
    }

    #[test]
    fn toy_search_finds_max_phalanx_design() {
        let cfg = SearchConfig {
            iterations: 500,
            seed: 1,
            ..SearchConfig::default()
        };
        let result = run_search(toy_grammar(), &cfg, &toy_evaluator(), |_| {}).unwrap();
        // Known optimum by construction: 2 fingers x 3 phalanges.
        assert_abs_diff_eq!(result.top[0].reward, 6.0);
    }

    #[test]
    fn single_iteration_yields_single_design() {
        let cfg = SearchConfig {
            iterations: 1,
            seed: 2,
            top_k: 5,
            ..SearchConfig::default()
        };
        let result = run_search(toy_grammar(), &cfg, &toy_evaluator(), |_| {}).unwrap();
        assert_eq!(result.top.len(), 1);
        assert_eq!(result.episodes.len(), 1);
    }

    #[test]
    fn memoization_reuses_designs() {
        let cfg = SearchConfig {
            iterations: 300,
            seed: 8,
            ..SearchConfig::default()
        };
        let result = run_search(toy_grammar(), &cfg, &toy_evaluator(), |_| {}).unwrap();
        let distinct: std::collections::HashSet<&str> = result
            .episodes
            .iter()
            .map(|e| e.design_key.as_str())
            .collect();
        // The toy space is small; far fewer distinct designs than episodes.
        assert!(distinct.len() < result.episodes.len());
    }
}
