//! Graph grammar over gripper morphologies.
//!
//! A design is a rooted tree: the palm is the root of a star topology and
//! each finger hangs off it as a linear chain `B J (L J)* L`. Non-terminal
//! nodes are abstract placeholders; production rules either grow the
//! morphology (add fingers / phalanges) or terminate a placeholder by fixing
//! its physical parameter from a discrete set. A graph is terminal when no
//! placeholder remains, at which point it compiles to a simulable mechanism.
//!
//! Rule vocabulary (R1 is applied once by [`init_graph`] and never offered):
//!
//! | rule | rewrite                                | parameter set        |
//! |------|----------------------------------------|----------------------|
//! | R2   | FingerDummy → Base · Joint · Growth    | —                    |
//! | R3   | Growth → Link · Joint · Growth         | —                    |
//! | R4   | PalmNT → PalmT                         | fixed palm (1 entry) |
//! | R5   | BaseNT → BaseT(mount)                  | side × offset × angle|
//! | R6   | JointNT → JointT(stiffness)            | stiffnesses          |
//! | R7   | LinkNT → LinkT(length)                 | lengths              |
//! | R8   | delete FingerDummy                     | —                    |
//! | R9   | Growth → LinkNT (final phalanx)        | —                    |

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

/// Which palm edge a finger base is mounted on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PalmSide {
    Top,
    Bottom,
}

/// Placement of a finger base on the palm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MountTransform {
    pub side: PalmSide,
    /// Offset along the palm from the palm center, meters.
    pub offset_m: f64,
    /// Mounting orientation relative to the palm edge normal, degrees.
    /// Stored in degrees so that serialized graphs round-trip exactly.
    pub angle_deg: f64,
}

/// Node alphabet. Non-terminal kinds are structural placeholders; terminal
/// kinds carry exactly one physical parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeKind {
    PalmNT,
    /// `F` — a slot on the palm where a finger may be added.
    FingerDummy,
    BaseNT,
    JointNT,
    LinkNT,
    /// `FG` — the growth point at the tip of an unfinished finger.
    Growth,
    PalmT,
    BaseT(MountTransform),
    JointT {
        stiffness_nm_per_rad: f64,
    },
    LinkT {
        length_m: f64,
    },
}

impl NodeKind {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            NodeKind::PalmT | NodeKind::BaseT(_) | NodeKind::JointT { .. } | NodeKind::LinkT { .. }
        )
    }

    pub fn is_palm(&self) -> bool {
        matches!(self, NodeKind::PalmNT | NodeKind::PalmT)
    }

    pub fn is_base(&self) -> bool {
        matches!(self, NodeKind::BaseNT | NodeKind::BaseT(_))
    }

    pub fn is_joint(&self) -> bool {
        matches!(self, NodeKind::JointNT | NodeKind::JointT { .. })
    }

    pub fn is_link(&self) -> bool {
        matches!(self, NodeKind::LinkNT | NodeKind::LinkT { .. })
    }

    fn doc_name(&self) -> &'static str {
        match self {
            NodeKind::PalmNT => "PalmNT",
            NodeKind::FingerDummy => "FingerDummy",
            NodeKind::BaseNT => "BaseNT",
            NodeKind::JointNT => "JointNT",
            NodeKind::LinkNT => "LinkNT",
            NodeKind::Growth => "Growth",
            NodeKind::PalmT => "PalmT",
            NodeKind::BaseT(_) => "BaseT",
            NodeKind::JointT { .. } => "JointT",
            NodeKind::LinkT { .. } => "LinkT",
        }
    }
}

/// Production rule identifiers. R1 exists only inside [`init_graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
}

/// One concrete grammar action: a rule instance bound to a target node and,
/// for terminating rules R4–R7, an index into the rule's parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub rule: RuleId,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub param: Option<usize>,
}

impl Action {
    fn on(rule: RuleId, target: NodeId) -> Self {
        Action {
            rule,
            target: Some(target),
            param: None,
        }
    }

    fn with_param(rule: RuleId, target: NodeId, param: usize) -> Self {
        Action {
            rule,
            target: Some(target),
            param: Some(param),
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.rule)?;
        if let Some(t) = self.target {
            write!(f, "@{t}")?;
        }
        if let Some(p) = self.param {
            write!(f, "#{p}")?;
        }
        Ok(())
    }
}

/// Structural limits on the design space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarLimits {
    pub max_fingers: usize,
    pub max_phalanges: usize,
    pub min_fingers: usize,
    /// Rule application count after which only terminating / removing rules
    /// are offered, bounding every rollout.
    pub depth_cap: usize,
}

impl Default for GrammarLimits {
    fn default() -> Self {
        GrammarLimits {
            max_fingers: 4,
            max_phalanges: 5,
            min_fingers: 1,
            depth_cap: 30,
        }
    }
}

/// Discrete parameter sets the terminating rules draw from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarParams {
    pub lengths_m: Vec<f64>,
    pub stiffnesses_nm_per_rad: Vec<f64>,
    pub mount_sides: Vec<PalmSide>,
    pub mount_offsets_m: Vec<f64>,
    pub mount_angles_deg: Vec<f64>,
}

impl Default for GrammarParams {
    fn default() -> Self {
        GrammarParams {
            lengths_m: vec![0.05, 0.08, 0.11],
            stiffnesses_nm_per_rad: vec![0.1, 0.3, 0.9],
            mount_sides: vec![PalmSide::Top, PalmSide::Bottom],
            mount_offsets_m: vec![-0.03, 0.0, 0.03],
            mount_angles_deg: vec![-30.0, 0.0, 30.0],
        }
    }
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("invalid action {action}: {reason}")]
    InvalidAction { action: String, reason: String },
    #[error("malformed design graph document: {0}")]
    Parse(String),
    #[error("design graph violates structure: {0}")]
    Structure(String),
    #[error("invalid grammar configuration: {0}")]
    Config(String),
}

/// A palm-rooted design tree with canonical node numbering: ids are assigned
/// in creation order and never reused, so equal construction sequences yield
/// identical graphs.
#[derive(Clone, Debug)]
pub struct DesignGraph {
    nodes: BTreeMap<NodeId, NodeKind>,
    edges: BTreeSet<(NodeId, NodeId)>,
    next_id: NodeId,
}

impl PartialEq for DesignGraph {
    /// Structural equality: nodes and edges; the fresh-id counter is
    /// bookkeeping and deliberately excluded.
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl DesignGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeKind> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &NodeKind)> {
        self.nodes.iter().map(|(id, k)| (*id, k))
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn root(&self) -> NodeId {
        self.nodes
            .iter()
            .find(|(_, k)| k.is_palm())
            .map(|(id, _)| *id)
            .expect("design graph always has a palm root")
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter(|(p, _)| *p == id)
            .map(|(_, c)| *c)
            .collect()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.edges
            .iter()
            .find(|(_, c)| *c == id)
            .map(|(p, _)| *p)
    }

    /// Ids of the finger base nodes (palm children of base kind), ascending.
    pub fn finger_bases(&self) -> Vec<NodeId> {
        let mut bases: Vec<NodeId> = self
            .children(self.root())
            .into_iter()
            .filter(|id| self.nodes[id].is_base())
            .collect();
        bases.sort_unstable();
        bases
    }

    pub fn finger_count(&self) -> usize {
        self.finger_bases().len()
    }

    pub fn dummy_count(&self) -> usize {
        self.nodes
            .values()
            .filter(|k| matches!(k, NodeKind::FingerDummy))
            .count()
    }

    /// The chain of node ids from a finger base to its leaf, base first.
    pub fn finger_chain(&self, base: NodeId) -> Vec<NodeId> {
        let mut chain = vec![base];
        let mut current = base;
        loop {
            let kids = self.children(current);
            match kids.as_slice() {
                [] => break,
                [next] => {
                    chain.push(*next);
                    current = *next;
                }
                _ => break, // malformed; validate_structure reports it
            }
        }
        chain
    }

    /// Number of joints in the finger containing `id` (its eventual phalanx
    /// count — every joint pairs with a link once the finger terminates).
    fn finger_joint_count(&self, member: NodeId) -> usize {
        let mut base = member;
        while let Some(p) = self.parent(base) {
            if self.nodes[&p].is_palm() {
                break;
            }
            base = p;
        }
        self.finger_chain(base)
            .iter()
            .filter(|id| self.nodes[id].is_joint())
            .count()
    }

    /// True when no placeholder remains. Finger-count bounds are enforced on
    /// top of this by [`Grammar::is_terminal`].
    pub fn all_nodes_terminal(&self) -> bool {
        self.nodes.values().all(NodeKind::is_terminal)
    }

    /// Count of non-terminal nodes, with growth points weighted double: a
    /// growth point takes two rule applications (R9 then R7) to terminate.
    /// This is the exact number of post-cap steps needed to finish a graph
    /// that already has enough fingers.
    pub fn termination_potential(&self) -> usize {
        self.nodes
            .values()
            .map(|k| match k {
                NodeKind::Growth => 2,
                k if !k.is_terminal() => 1,
                _ => 0,
            })
            .sum()
    }

    fn fresh_id(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn insert_node(&mut self, kind: NodeKind) -> NodeId {
        let id = self.fresh_id();
        self.nodes.insert(id, kind);
        id
    }

    fn remove_leaf(&mut self, id: NodeId) {
        self.nodes.remove(&id);
        self.edges.retain(|(p, c)| *p != id && *c != id);
    }

    /// Validates the tree shape and the per-finger path pattern
    /// `B J (L J)* (L | FG)`.
    pub fn validate_structure(&self) -> Result<(), GrammarError> {
        let palms: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|(_, k)| k.is_palm())
            .map(|(id, _)| *id)
            .collect();
        if palms.len() != 1 {
            return Err(GrammarError::Structure(format!(
                "expected exactly one palm node, found {}",
                palms.len()
            )));
        }
        let root = palms[0];
        if self.parent(root).is_some() {
            return Err(GrammarError::Structure("palm must be the root".into()));
        }
        for (parent, child) in &self.edges {
            if !self.nodes.contains_key(parent) || !self.nodes.contains_key(child) {
                return Err(GrammarError::Structure(format!(
                    "edge ({parent},{child}) references a missing node"
                )));
            }
        }
        for (id, _) in self.nodes.iter().filter(|(id, _)| **id != root) {
            let parents = self.edges.iter().filter(|(_, c)| c == id).count();
            if parents != 1 {
                return Err(GrammarError::Structure(format!(
                    "node {id} has {parents} parents, expected 1"
                )));
            }
        }
        if self.nodes.keys().any(|id| *id >= self.next_id) {
            return Err(GrammarError::Structure(
                "node id at or above the fresh-id counter".into(),
            ));
        }
        for child in self.children(root) {
            match self.nodes[&child] {
                NodeKind::FingerDummy => {
                    if !self.children(child).is_empty() {
                        return Err(GrammarError::Structure(
                            "finger dummy must be a leaf".into(),
                        ));
                    }
                }
                ref k if k.is_base() => self.validate_finger(child)?,
                ref k => {
                    return Err(GrammarError::Structure(format!(
                        "palm child {child} has kind {}; expected FingerDummy or base",
                        k.doc_name()
                    )))
                }
            }
        }
        // Every non-root node must be reachable from the palm.
        let mut reachable = 1;
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            for c in self.children(n) {
                reachable += 1;
                stack.push(c);
            }
        }
        if reachable != self.nodes.len() {
            return Err(GrammarError::Structure(
                "graph is not connected to the palm".into(),
            ));
        }
        Ok(())
    }

    fn validate_finger(&self, base: NodeId) -> Result<(), GrammarError> {
        let chain = self.finger_chain(base);
        for id in &chain {
            if self.children(*id).len() > 1 {
                return Err(GrammarError::Structure(format!(
                    "finger node {id} has multiple children"
                )));
            }
        }
        // Pattern B J (L J)* (L | FG).
        let kinds: Vec<&NodeKind> = chain.iter().map(|id| &self.nodes[id]).collect();
        let mut i = 0;
        let fail = |what: &str, at: usize| {
            Err(GrammarError::Structure(format!(
                "finger rooted at {base}: expected {what} at chain position {at}"
            )))
        };
        if i >= kinds.len() || !kinds[i].is_base() {
            return fail("base", i);
        }
        i += 1;
        if i >= kinds.len() || !kinds[i].is_joint() {
            return fail("joint", i);
        }
        i += 1;
        loop {
            if i >= kinds.len() {
                return fail("link or growth point", i);
            }
            match kinds[i] {
                NodeKind::Growth => {
                    return if i == kinds.len() - 1 {
                        Ok(())
                    } else {
                        fail("growth point at chain end only", i)
                    };
                }
                k if k.is_link() => {
                    if i == kinds.len() - 1 {
                        return Ok(());
                    }
                    i += 1;
                    if !kinds[i].is_joint() {
                        return fail("joint", i);
                    }
                    i += 1;
                }
                _ => return fail("link or growth point", i),
            }
        }
    }
}

/// Returns the seed graph every design grows from: a palm placeholder with
/// six finger dummies.
pub fn init_graph() -> DesignGraph {
    let mut g = DesignGraph {
        nodes: BTreeMap::new(),
        edges: BTreeSet::new(),
        next_id: 0,
    };
    let palm = g.insert_node(NodeKind::PalmNT);
    for _ in 0..6 {
        let dummy = g.insert_node(NodeKind::FingerDummy);
        g.edges.insert((palm, dummy));
    }
    g
}

/// Parameter sets plus limits; owns rule enumeration and application.
#[derive(Clone, Debug, Default)]
pub struct Grammar {
    pub params: GrammarParams,
    pub limits: GrammarLimits,
}

impl Grammar {
    pub fn new(params: GrammarParams, limits: GrammarLimits) -> Result<Self, GrammarError> {
        if params.lengths_m.is_empty()
            || params.stiffnesses_nm_per_rad.is_empty()
            || params.mount_sides.is_empty()
            || params.mount_offsets_m.is_empty()
            || params.mount_angles_deg.is_empty()
        {
            return Err(GrammarError::Config(
                "every discrete parameter set must be non-empty".into(),
            ));
        }
        if limits.min_fingers < 1 {
            return Err(GrammarError::Config("min_fingers must be at least 1".into()));
        }
        if limits.max_fingers > 6 {
            return Err(GrammarError::Config(
                "max_fingers cannot exceed the 6 dummies created at init".into(),
            ));
        }
        if limits.min_fingers > limits.max_fingers {
            return Err(GrammarError::Config(
                "min_fingers cannot exceed max_fingers".into(),
            ));
        }
        if limits.max_phalanges < 1 {
            return Err(GrammarError::Config("max_phalanges must be at least 1".into()));
        }
        Ok(Grammar { params, limits })
    }

    /// The R5 parameter set: side × offset × angle, in that nesting order.
    pub fn mounts(&self) -> Vec<MountTransform> {
        let mut out = Vec::new();
        for side in &self.params.mount_sides {
            for offset in &self.params.mount_offsets_m {
                for angle in &self.params.mount_angles_deg {
                    out.push(MountTransform {
                        side: *side,
                        offset_m: *offset,
                        angle_deg: *angle,
                    });
                }
            }
        }
        out
    }

    /// Every legal action on `g` after `applied_count` prior rule
    /// applications. Deterministic order: rule, then target id, then
    /// parameter index — the action "ordinal" used for tie-breaking.
    ///
    /// Past the depth cap only terminating/removing rules are offered, with
    /// one exception: R2 stays available while the graph has fewer than
    /// `min_fingers` fingers, since adding a finger is then the only path to
    /// a terminal graph.
    pub fn applicable_actions(&self, g: &DesignGraph, applied_count: usize) -> Vec<Action> {
        let mut actions = Vec::new();
        let capped = applied_count >= self.limits.depth_cap;
        let fingers = g.finger_count();
        let dummies = g.dummy_count();
        let mount_count = self.mounts().len();

        let dummy_ids: Vec<NodeId> = g
            .nodes()
            .filter(|(_, k)| matches!(k, NodeKind::FingerDummy))
            .map(|(id, _)| id)
            .collect();
        let growth_ids: Vec<NodeId> = g
            .nodes()
            .filter(|(_, k)| matches!(k, NodeKind::Growth))
            .map(|(id, _)| id)
            .collect();

        // R2: add a finger in place of a dummy.
        let r2_allowed = if capped {
            fingers < self.limits.min_fingers
        } else {
            fingers < self.limits.max_fingers
        };
        if r2_allowed {
            for id in &dummy_ids {
                actions.push(Action::on(RuleId::R2, *id));
            }
        }

        // R3: grow a phalanx at a growth point.
        if !capped {
            for id in &growth_ids {
                if g.finger_joint_count(*id) + 1 <= self.limits.max_phalanges {
                    actions.push(Action::on(RuleId::R3, *id));
                }
            }
        }

        // R4: terminate the palm.
        for (id, kind) in g.nodes() {
            if matches!(kind, NodeKind::PalmNT) {
                actions.push(Action::with_param(RuleId::R4, id, 0));
            }
        }

        // R5: terminate a base, one action per mount.
        for (id, kind) in g.nodes() {
            if matches!(kind, NodeKind::BaseNT) {
                for p in 0..mount_count {
                    actions.push(Action::with_param(RuleId::R5, id, p));
                }
            }
        }

        // R6: terminate a joint, one action per stiffness.
        for (id, kind) in g.nodes() {
            if matches!(kind, NodeKind::JointNT) {
                for p in 0..self.params.stiffnesses_nm_per_rad.len() {
                    actions.push(Action::with_param(RuleId::R6, id, p));
                }
            }
        }

        // R7: terminate a link, one action per length.
        for (id, kind) in g.nodes() {
            if matches!(kind, NodeKind::LinkNT) {
                for p in 0..self.params.lengths_m.len() {
                    actions.push(Action::with_param(RuleId::R7, id, p));
                }
            }
        }

        // R8: remove a dummy, as long as min_fingers stays reachable.
        if fingers + dummies > self.limits.min_fingers {
            for id in &dummy_ids {
                actions.push(Action::on(RuleId::R8, *id));
            }
        }

        // R9: stop a finger growing; the growth point becomes the last link.
        for id in &growth_ids {
            actions.push(Action::on(RuleId::R9, *id));
        }

        actions
    }

    /// Applies `a`, returning a new graph; the input is never mutated.
    /// Untouched nodes keep their ids; new nodes take consecutive fresh ids.
    pub fn apply(&self, g: &DesignGraph, a: &Action) -> Result<DesignGraph, GrammarError> {
        let invalid = |reason: &str| {
            Err(GrammarError::InvalidAction {
                action: a.to_string(),
                reason: reason.to_string(),
            })
        };
        let target = match (a.rule, a.target) {
            (RuleId::R1, _) => return invalid("R1 is applied only by init_graph"),
            (_, Some(t)) => t,
            (_, None) => return invalid("missing target node"),
        };
        let Some(kind) = g.node(target).copied() else {
            return invalid("target node does not exist");
        };
        let mut out = g.clone();
        match a.rule {
            RuleId::R2 => {
                if !matches!(kind, NodeKind::FingerDummy) {
                    return invalid("R2 target must be a finger dummy");
                }
                if g.finger_count() >= self.limits.max_fingers {
                    return invalid("finger limit reached");
                }
                let palm = g.parent(target).expect("dummy always has a parent");
                out.remove_leaf(target);
                let base = out.insert_node(NodeKind::BaseNT);
                let joint = out.insert_node(NodeKind::JointNT);
                let growth = out.insert_node(NodeKind::Growth);
                out.edges.insert((palm, base));
                out.edges.insert((base, joint));
                out.edges.insert((joint, growth));
            }
            RuleId::R3 => {
                if !matches!(kind, NodeKind::Growth) {
                    return invalid("R3 target must be a growth point");
                }
                if g.finger_joint_count(target) + 1 > self.limits.max_phalanges {
                    return invalid("phalanx limit reached");
                }
                let parent = g.parent(target).expect("growth always has a parent");
                out.remove_leaf(target);
                let link = out.insert_node(NodeKind::LinkNT);
                let joint = out.insert_node(NodeKind::JointNT);
                let growth = out.insert_node(NodeKind::Growth);
                out.edges.insert((parent, link));
                out.edges.insert((link, joint));
                out.edges.insert((joint, growth));
            }
            RuleId::R4 => {
                if !matches!(kind, NodeKind::PalmNT) {
                    return invalid("R4 target must be a non-terminal palm");
                }
                if a.param != Some(0) {
                    return invalid("palm parameter set has exactly one entry");
                }
                out.nodes.insert(target, NodeKind::PalmT);
            }
            RuleId::R5 => {
                if !matches!(kind, NodeKind::BaseNT) {
                    return invalid("R5 target must be a non-terminal base");
                }
                let mounts = self.mounts();
                let Some(mount) = a.param.and_then(|p| mounts.get(p)) else {
                    return invalid("mount parameter index out of range");
                };
                out.nodes.insert(target, NodeKind::BaseT(*mount));
            }
            RuleId::R6 => {
                if !matches!(kind, NodeKind::JointNT) {
                    return invalid("R6 target must be a non-terminal joint");
                }
                let Some(k) = a
                    .param
                    .and_then(|p| self.params.stiffnesses_nm_per_rad.get(p))
                else {
                    return invalid("stiffness parameter index out of range");
                };
                out.nodes.insert(
                    target,
                    NodeKind::JointT {
                        stiffness_nm_per_rad: *k,
                    },
                );
            }
            RuleId::R7 => {
                if !matches!(kind, NodeKind::LinkNT) {
                    return invalid("R7 target must be a non-terminal link");
                }
                let Some(l) = a.param.and_then(|p| self.params.lengths_m.get(p)) else {
                    return invalid("length parameter index out of range");
                };
                out.nodes.insert(target, NodeKind::LinkT { length_m: *l });
            }
            RuleId::R8 => {
                if !matches!(kind, NodeKind::FingerDummy) {
                    return invalid("R8 target must be a finger dummy");
                }
                if g.finger_count() + g.dummy_count() <= self.limits.min_fingers {
                    return invalid("removal would make min_fingers unreachable");
                }
                out.remove_leaf(target);
            }
            RuleId::R9 => {
                if !matches!(kind, NodeKind::Growth) {
                    return invalid("R9 target must be a growth point");
                }
                out.nodes.insert(target, NodeKind::LinkNT);
            }
            RuleId::R1 => unreachable!(),
        }
        Ok(out)
    }

    /// A graph is terminal when every node is terminal and the finger count
    /// lies within the configured bounds.
    pub fn is_terminal(&self, g: &DesignGraph) -> bool {
        g.all_nodes_terminal()
            && (self.limits.min_fingers..=self.limits.max_fingers).contains(&g.finger_count())
    }

    /// Applies uniformly random valid actions until the graph is terminal.
    /// Returns the terminal graph and the number of actions taken. The depth
    /// cap guarantees termination: past it, every offered action strictly
    /// decreases the termination potential (forced R2 excepted, which can
    /// fire at most `min_fingers` times).
    pub fn random_rollout<R: Rng>(
        &self,
        g: &DesignGraph,
        applied_count: usize,
        rng: &mut R,
    ) -> (DesignGraph, usize) {
        let mut current = g.clone();
        let mut applied = applied_count;
        let mut steps = 0;
        while !self.is_terminal(&current) {
            let actions = self.applicable_actions(&current, applied);
            debug_assert!(!actions.is_empty(), "non-terminal graph with no actions");
            let choice = actions[rng.gen_range(0..actions.len())];
            current = self
                .apply(&current, &choice)
                .expect("enumerated actions are always applicable");
            applied += 1;
            steps += 1;
        }
        (current, steps)
    }
}

// --- persistence ------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    version: u32,
    nodes: Vec<NodeDoc>,
    edges: Vec<(NodeId, NodeId)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: NodeId,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    mount: Option<MountTransform>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    stiffness_nm_per_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    length_m: Option<f64>,
}

const DOC_VERSION: u32 = 1;

/// Canonical single-line document: ids ascending, edges ascending. The output
/// is byte-stable for a given graph.
pub fn serialize(g: &DesignGraph) -> String {
    let nodes = g
        .nodes()
        .map(|(id, kind)| {
            let mut doc = NodeDoc {
                id,
                kind: kind.doc_name().to_string(),
                mount: None,
                stiffness_nm_per_rad: None,
                length_m: None,
            };
            match kind {
                NodeKind::BaseT(mount) => doc.mount = Some(*mount),
                NodeKind::JointT {
                    stiffness_nm_per_rad,
                } => doc.stiffness_nm_per_rad = Some(*stiffness_nm_per_rad),
                NodeKind::LinkT { length_m } => doc.length_m = Some(*length_m),
                _ => {}
            }
            doc
        })
        .collect();
    let doc = GraphDoc {
        version: DOC_VERSION,
        nodes,
        edges: g.edges().collect(),
    };
    serde_json::to_string(&doc).expect("graph document serialization cannot fail")
}

pub fn deserialize(text: &str) -> Result<DesignGraph, GrammarError> {
    let doc: GraphDoc = serde_json::from_str(text).map_err(|e| {
        GrammarError::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    if doc.version != DOC_VERSION {
        return Err(GrammarError::Parse(format!(
            "unsupported document version {} (expected {DOC_VERSION})",
            doc.version
        )));
    }
    let mut nodes = BTreeMap::new();
    for n in doc.nodes {
        let kind = match n.kind.as_str() {
            "PalmNT" => NodeKind::PalmNT,
            "FingerDummy" => NodeKind::FingerDummy,
            "BaseNT" => NodeKind::BaseNT,
            "JointNT" => NodeKind::JointNT,
            "LinkNT" => NodeKind::LinkNT,
            "Growth" => NodeKind::Growth,
            "PalmT" => NodeKind::PalmT,
            "BaseT" => NodeKind::BaseT(n.mount.ok_or_else(|| {
                GrammarError::Parse(format!("node {}: BaseT requires a mount", n.id))
            })?),
            "JointT" => NodeKind::JointT {
                stiffness_nm_per_rad: n.stiffness_nm_per_rad.ok_or_else(|| {
                    GrammarError::Parse(format!(
                        "node {}: JointT requires stiffness_nm_per_rad",
                        n.id
                    ))
                })?,
            },
            "LinkT" => NodeKind::LinkT {
                length_m: n.length_m.ok_or_else(|| {
                    GrammarError::Parse(format!("node {}: LinkT requires length_m", n.id))
                })?,
            },
            other => {
                return Err(GrammarError::Parse(format!(
                    "node {}: unknown kind {other:?}",
                    n.id
                )))
            }
        };
        if nodes.insert(n.id, kind).is_some() {
            return Err(GrammarError::Parse(format!("duplicate node id {}", n.id)));
        }
    }
    let next_id = nodes.keys().max().map_or(0, |m| m + 1);
    let g = DesignGraph {
        nodes,
        edges: doc.edges.into_iter().collect(),
        next_id,
    };
    g.validate_structure()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grammar() -> Grammar {
        Grammar::default()
    }

    #[test]
    fn init_graph_shape() {
        let g = init_graph();
        assert_eq!(g.node_count(), 7);
        assert_eq!(g.edge_count(), 6);
        assert!(matches!(g.node(g.root()), Some(NodeKind::PalmNT)));
        assert_eq!(g.root(), 0);
        assert!(!grammar().is_terminal(&g));
        assert_eq!(g, init_graph());
        g.validate_structure().unwrap();
    }

    #[test]
    fn init_actions_enumeration() {
        let g = init_graph();
        let actions = grammar().applicable_actions(&g, 0);
        let count = |rule: RuleId| actions.iter().filter(|a| a.rule == rule).count();
        assert_eq!(count(RuleId::R2), 6);
        assert_eq!(count(RuleId::R8), 6);
        assert_eq!(count(RuleId::R4), 1);
        assert_eq!(count(RuleId::R3), 0);
        assert_eq!(count(RuleId::R9), 0);
        assert_eq!(count(RuleId::R5), 0);
    }

    #[test]
    fn r2_replaces_dummy_with_finger_stub() {
        let gr = grammar();
        let g = init_graph();
        let out = gr.apply(&g, &Action::on(RuleId::R2, 1)).unwrap();
        assert_eq!(out.node_count(), 9); // -1 dummy, +3 chain nodes
        assert_eq!(out.finger_count(), 1);
        let base = out.finger_bases()[0];
        assert_eq!(base, 7);
        let chain = out.finger_chain(base);
        assert_eq!(chain, vec![7, 8, 9]);
        assert!(matches!(out.node(8), Some(NodeKind::JointNT)));
        assert!(matches!(out.node(9), Some(NodeKind::Growth)));
        // Input untouched.
        assert_eq!(g.node_count(), 7);
        out.validate_structure().unwrap();
    }

    #[test]
    fn r8_removes_exactly_one_node() {
        let gr = grammar();
        let g = init_graph();
        let out = gr.apply(&g, &Action::on(RuleId::R8, 3)).unwrap();
        assert_eq!(out.node_count(), g.node_count() - 1);
        out.validate_structure().unwrap();
    }

    #[test]
    fn no_r2_at_finger_limit() {
        let gr = grammar();
        let mut g = init_graph();
        for dummy in 1..=4 {
            g = gr.apply(&g, &Action::on(RuleId::R2, dummy)).unwrap();
        }
        assert_eq!(g.finger_count(), 4);
        let actions = gr.applicable_actions(&g, 4);
        assert!(actions.iter().all(|a| a.rule != RuleId::R2));
    }

    #[test]
    fn r8_respects_min_fingers() {
        let gr = grammar();
        let mut g = init_graph();
        for dummy in 1..=5 {
            g = gr.apply(&g, &Action::on(RuleId::R8, dummy)).unwrap();
        }
        // One dummy and no fingers left: deletion must be refused.
        assert_eq!(g.dummy_count(), 1);
        let actions = gr.applicable_actions(&g, 5);
        assert!(actions.iter().all(|a| a.rule != RuleId::R8));
        assert!(gr.apply(&g, &Action::on(RuleId::R8, 6)).is_err());
        // R2 on the last dummy is still offered.
        assert!(actions.iter().any(|a| a.rule == RuleId::R2));
    }

    #[test]
    fn r2_forced_past_depth_cap_when_under_min_fingers() {
        let gr = grammar();
        let mut g = init_graph();
        for dummy in 1..=5 {
            g = gr.apply(&g, &Action::on(RuleId::R8, dummy)).unwrap();
        }
        let actions = gr.applicable_actions(&g, gr.limits.depth_cap + 10);
        assert!(actions.iter().any(|a| a.rule == RuleId::R2));
    }

    /// Builds the simplest one-fingered terminal gripper and checks the
    /// canonical ids survive the full rule sequence.
    fn one_finger_terminal() -> (Grammar, DesignGraph) {
        let gr = grammar();
        let mut g = init_graph();
        g = gr.apply(&g, &Action::on(RuleId::R2, 1)).unwrap();
        for dummy in 2..=6 {
            g = gr.apply(&g, &Action::on(RuleId::R8, dummy)).unwrap();
        }
        g = gr.apply(&g, &Action::on(RuleId::R9, 9)).unwrap();
        g = gr.apply(&g, &Action::with_param(RuleId::R4, 0, 0)).unwrap();
        // Mount index 4 = (top, offset 0.0, angle 0.0) with default sets.
        g = gr.apply(&g, &Action::with_param(RuleId::R5, 7, 4)).unwrap();
        g = gr.apply(&g, &Action::with_param(RuleId::R6, 8, 1)).unwrap();
        g = gr.apply(&g, &Action::with_param(RuleId::R7, 9, 1)).unwrap();
        (gr, g)
    }

    #[test]
    fn one_finger_gripper_is_terminal_with_preserved_ids() {
        let (gr, g) = one_finger_terminal();
        assert!(gr.is_terminal(&g));
        assert_eq!(g.node_count(), 4);
        let ids: Vec<NodeId> = g.nodes().map(|(id, _)| id).collect();
        assert_eq!(ids, vec![0, 7, 8, 9]);
        assert!(matches!(g.node(0), Some(NodeKind::PalmT)));
        assert!(matches!(g.node(7), Some(NodeKind::BaseT(_))));
        let actions = gr.applicable_actions(&g, 9);
        assert!(actions.is_empty());
    }

    #[test]
    fn growth_leaf_is_not_terminal() {
        let gr = grammar();
        let mut g = init_graph();
        g = gr.apply(&g, &Action::on(RuleId::R2, 1)).unwrap();
        for dummy in 2..=6 {
            g = gr.apply(&g, &Action::on(RuleId::R8, dummy)).unwrap();
        }
        g = gr.apply(&g, &Action::with_param(RuleId::R4, 0, 0)).unwrap();
        g = gr.apply(&g, &Action::with_param(RuleId::R5, 7, 0)).unwrap();
        g = gr.apply(&g, &Action::with_param(RuleId::R6, 8, 0)).unwrap();
        assert!(!gr.is_terminal(&g)); // Growth node 9 remains
    }

    #[test]
    fn apply_is_deterministic() {
        let gr = grammar();
        let seq = [
            Action::on(RuleId::R2, 2),
            Action::on(RuleId::R3, 9),
            Action::on(RuleId::R8, 1),
        ];
        let run = || {
            let mut g = init_graph();
            for a in &seq {
                g = gr.apply(&g, a).unwrap();
            }
            g
        };
        assert_eq!(run(), run());
        assert_eq!(serialize(&run()), serialize(&run()));
    }

    #[test]
    fn serialized_doc_matches_expected_layout() {
        let (_, g) = one_finger_terminal();
        let text = serialize(&g);
        let expected = concat!(
            r#"{"version":1,"nodes":["#,
            r#"{"id":0,"kind":"PalmT"},"#,
            r#"{"id":7,"kind":"BaseT","mount":{"side":"top","offset_m":0.0,"angle_deg":0.0}},"#,
            r#"{"id":8,"kind":"JointT","stiffness_nm_per_rad":0.3},"#,
            r#"{"id":9,"kind":"LinkT","length_m":0.08}],"#,
            r#""edges":[[0,7],[7,8],[8,9]]}"#,
        );
        assert_eq!(text, expected);
    }

    #[test]
    fn round_trip_identity() {
        let (_, g) = one_finger_terminal();
        let text = serialize(&g);
        let back = deserialize(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(serialize(&back), text);

        let init = init_graph();
        assert_eq!(deserialize(&serialize(&init)).unwrap(), init);
    }

    #[test]
    fn deserialize_rejects_garbage() {
        assert!(matches!(deserialize("{}"), Err(GrammarError::Parse(_))));
        assert!(deserialize("not json").is_err());
        // A floating node with two palms.
        let bad = r#"{"version":1,"nodes":[{"id":0,"kind":"PalmT"},{"id":1,"kind":"PalmT"}],"edges":[]}"#;
        assert!(matches!(deserialize(bad), Err(GrammarError::Structure(_))));
    }

    #[test]
    fn rollouts_terminate_within_potential_bound() {
        let gr = grammar();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = init_graph();
            let (terminal, steps) = gr.random_rollout(&start, 0, &mut rng);
            assert!(gr.is_terminal(&terminal));
            terminal.validate_structure().unwrap();
            let fingers = terminal.finger_count();
            assert!((1..=4).contains(&fingers));
            for base in terminal.finger_bases() {
                let phalanges = terminal
                    .finger_chain(base)
                    .iter()
                    .filter(|id| terminal.node(**id).unwrap().is_link())
                    .count();
                assert!((1..=5).contains(&phalanges));
            }
            // Worst case: cap steps, then one step per unit of termination
            // potential (bounded by twice the largest reachable node count),
            // plus 4 steps of slack per forced finger insertion.
            let max_nodes_at_cap = 7 + 2 * gr.limits.depth_cap;
            let bound = gr.limits.depth_cap + 2 * max_nodes_at_cap + 4 * gr.limits.min_fingers;
            assert!(steps <= bound, "rollout took {steps} steps");
        }
    }

    #[test]
    fn intermediate_graphs_stay_valid() {
        let gr = grammar();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut g = init_graph();
        let mut applied = 0;
        while !gr.is_terminal(&g) {
            g.validate_structure().unwrap();
            let actions = gr.applicable_actions(&g, applied);
            g = gr.apply(&g, &actions[rng.gen_range(0..actions.len())]).unwrap();
            applied += 1;
        }
        g.validate_structure().unwrap();
    }
}
