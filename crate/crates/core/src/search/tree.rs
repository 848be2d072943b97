//! Arena-allocated search tree with count-only statistics.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::macrolib::{MacroAction, MacroLibrary};
use crate::prior::{CandidateSet, ProbabilityVector};
use crate::scalar::Scalar;
use crate::world::StateVec;

pub type NodeId = usize;

pub const ROOT: NodeId = 0;

/// Node-local branching data, fixed once the node is expanded.
#[derive(Debug, Clone)]
pub struct Expansion<T> {
    candidates: CandidateSet<T>,
    psi: ProbabilityVector<T>,
    visits: Vec<u64>,
    children: Vec<NodeId>,
}

impl<T: Scalar> Expansion<T> {
    pub fn candidates(&self) -> &CandidateSet<T> {
        &self.candidates
    }

    pub fn psi(&self) -> &ProbabilityVector<T> {
        &self.psi
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode<T> {
    pub state: StateVec<T>,
    /// Macro-steps from the root.
    pub depth: usize,
    /// Parent node and the candidate slot that leads here.
    pub parent: Option<(NodeId, usize)>,
    pub is_goal: bool,
    expansion: Option<Expansion<T>>,
}

impl<T: Scalar> TreeNode<T> {
    pub fn expansion(&self) -> Option<&Expansion<T>> {
        self.expansion.as_ref()
    }

    pub fn is_expanded(&self) -> bool {
        self.expansion.is_some()
    }
}

/// How the selection score turns visit counts into an exploration bonus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRule {
    pub c_exp: f64,
    /// Use the candidate's own count in the numerator instead of the node total.
    pub literal: bool,
}

#[derive(Debug, Clone)]
pub struct Tree<T> {
    nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn new(root_state: StateVec<T>, root_is_goal: bool) -> Self {
        Self {
            nodes: vec![TreeNode {
                state: root_state,
                depth: 0,
                parent: None,
                is_goal: root_is_goal,
                expansion: None,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode<T> {
        &self.nodes[id]
    }

    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[ROOT]
    }

    /// Attaches candidates and one child per candidate to `id`.
    ///
    /// `children` holds `(state, is_goal)` for each candidate slot in order.
    pub fn attach_expansion(
        &mut self,
        id: NodeId,
        candidates: CandidateSet<T>,
        psi: ProbabilityVector<T>,
        children: Vec<(StateVec<T>, bool)>,
    ) -> Result<Vec<NodeId>> {
        if self.nodes[id].expansion.is_some() {
            return Err(Error::Contract(format!("node {id} is already expanded")));
        }
        if candidates.len() != psi.len() || candidates.len() != children.len() {
            return Err(Error::Contract(
                "candidate, prior, and child counts disagree".into(),
            ));
        }
        let depth = self.nodes[id].depth + 1;
        let mut ids = Vec::with_capacity(children.len());
        for (slot, (state, is_goal)) in children.into_iter().enumerate() {
            ids.push(self.nodes.len());
            self.nodes.push(TreeNode {
                state,
                depth,
                parent: Some((id, slot)),
                is_goal,
                expansion: None,
            });
        }
        let k = candidates.len();
        self.nodes[id].expansion = Some(Expansion {
            candidates,
            psi,
            visits: vec![0; k],
            children: ids.clone(),
        });
        Ok(ids)
    }

    /// Exploration score of candidate `slot` at expanded node `id`.
    pub fn score(&self, id: NodeId, slot: usize, rule: ScoreRule) -> T {
        let e = self.nodes[id]
            .expansion
            .as_ref()
            .expect("score requires an expanded node");
        score_of(e.psi.get(slot), e.visits[slot], e.total_visits(), rule)
    }

    /// Highest-scoring slot at `id`; ties go to higher prior, then lower slot.
    pub fn select_slot(&self, id: NodeId, rule: ScoreRule) -> usize {
        let e = self.nodes[id]
            .expansion
            .as_ref()
            .expect("selection requires an expanded node");
        let total = e.total_visits();
        let mut best = 0;
        let mut best_score = score_of(e.psi.get(0), e.visits[0], total, rule);
        for slot in 1..e.visits.len() {
            let s = score_of(e.psi.get(slot), e.visits[slot], total, rule);
            let better = match s.partial_cmp(&best_score) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => e.psi.get(slot) > e.psi.get(best),
                _ => false,
            };
            if better {
                best = slot;
                best_score = s;
            }
        }
        best
    }

    /// Descends by argmax score from the root, stopping at the first node that
    /// is unexpanded, a goal, or at depth `d_max`. Returns the final node and the
    /// `(node, slot)` pairs traversed.
    pub fn select_path(&self, d_max: usize, rule: ScoreRule) -> (NodeId, Vec<(NodeId, usize)>) {
        let mut id = ROOT;
        let mut path = Vec::new();
        loop {
            let node = &self.nodes[id];
            let Some(e) = node.expansion.as_ref() else { break };
            if node.is_goal || node.depth >= d_max {
                break;
            }
            let slot = self.select_slot(id, rule);
            path.push((id, slot));
            id = e.children[slot];
        }
        (id, path)
    }

    /// Adds one visit to every `(node, slot)` pair on `path`.
    pub fn backpropagate(&mut self, path: &[(NodeId, usize)]) {
        for &(id, slot) in path {
            let e = self.nodes[id]
                .expansion
                .as_mut()
                .expect("backpropagation through an unexpanded node");
            e.visits[slot] += 1;
        }
    }

    /// Macro-actions leading from the root to `id`.
    pub fn plan_to(&self, id: NodeId, lib: &MacroLibrary<T>) -> Vec<MacroAction<T>> {
        let mut plan = Vec::new();
        let mut cur = id;
        while let Some((parent, slot)) = self.nodes[cur].parent {
            let e = self.nodes[parent].expansion.as_ref().unwrap();
            plan.push(lib.prototype(e.candidates.indices()[slot]).clone());
            cur = parent;
        }
        plan.reverse();
        plan
    }

    /// Node ids from the root to `id`.
    pub fn lineage(&self, id: NodeId) -> Vec<NodeId> {
        let mut ids = vec![id];
        let mut cur = id;
        while let Some((parent, _)) = self.nodes[cur].parent {
            ids.push(parent);
            cur = parent;
        }
        ids.reverse();
        ids
    }

    /// Most-visited root slot (ties: higher prior, then lower slot) and whether
    /// another slot shared its visit count.
    pub fn best_root_slot(&self) -> Option<(usize, bool)> {
        let e = self.nodes[ROOT].expansion.as_ref()?;
        let mut best = 0;
        for slot in 1..e.visits.len() {
            let better = match e.visits[slot].cmp(&e.visits[best]) {
                Ordering::Greater => true,
                Ordering::Equal => e.psi.get(slot) > e.psi.get(best),
                Ordering::Less => false,
            };
            if better {
                best = slot;
            }
        }
        let tie = e
            .visits
            .iter()
            .enumerate()
            .any(|(i, &v)| i != best && v == e.visits[best]);
        Some((best, tie))
    }
}

/// `c_exp * psi * sqrt(total) / (1 + n)`, or with `sqrt(n)` in the literal form.
pub fn score_of<T: Scalar>(psi: T, visits: u64, total: u64, rule: ScoreRule) -> T {
    let n = T::from_u64(visits).unwrap();
    let numer = if rule.literal {
        n.sqrt()
    } else {
        T::from_u64(total).unwrap().sqrt()
    };
    T::lit(rule.c_exp) * psi * numer / (T::one() + n)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::macrolib::Normalization;
    use crate::prior::{beta_distribution, psi_prior, sample_candidates};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const UNIT: ScoreRule = ScoreRule {
        c_exp: 1.0,
        literal: false,
    };

    fn m1(x: f64) -> MacroAction<f64> {
        MacroAction::from_flat(1, 1, vec![x]).unwrap()
    }

    pub(crate) fn line_lib(xs: &[f64]) -> MacroLibrary<f64> {
        MacroLibrary::new(xs.iter().map(|&x| m1(x)).collect(), Normalization::identity(1)).unwrap()
    }

    /// Root expanded over every prototype with an anchor at `anchor`.
    fn expanded_tree(lib: &MacroLibrary<f64>, anchor: f64) -> Tree<f64> {
        let mut tree = Tree::new(StateVec::new(vec![0.0]), false);
        let beta = beta_distribution(lib, &m1(anchor), 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cands = sample_candidates(&beta, lib.len(), m1(anchor), &mut rng).unwrap();
        let psi = psi_prior(&cands, lib, &m1(anchor), 1.0).unwrap();
        let children = (0..lib.len())
            .map(|i| (StateVec::new(vec![i as f64]), false))
            .collect();
        tree.attach_expansion(ROOT, cands, psi, children).unwrap();
        tree
    }

    #[test]
    fn score_examples() {
        let rule = UNIT;
        assert_eq!(score_of(0.5, 1, 1, rule), 0.25);
        assert_eq!(score_of(0.5, 0, 1, rule), 0.5);
        assert_eq!(score_of(0.3, 0, 0, rule), 0.0);
        let literal = ScoreRule { c_exp: 1.0, literal: true };
        assert_eq!(score_of(0.9, 0, 10, literal), 0.0);
        assert_eq!(score_of(0.5, 1, 1, literal), 0.25);
        let scaled = ScoreRule { c_exp: 1.4, literal: false };
        assert!((score_of(0.5f64, 0, 1, scaled) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn zero_visits_pick_highest_prior() {
        let lib = line_lib(&[3.0, 1.0, 0.0, 2.0]);
        let tree = expanded_tree(&lib, 0.0);
        let e = tree.root().expansion().unwrap();
        let slot = tree.select_slot(ROOT, UNIT);
        assert_eq!(e.candidates().indices()[slot], 2);
        for s in 0..4 {
            assert_eq!(tree.score(ROOT, s, UNIT), 0.0);
        }
    }

    #[test]
    fn equal_priors_tie_to_lower_slot_and_visits_move_selection() {
        let lib = line_lib(&[-1.0, 1.0]);
        let mut tree = expanded_tree(&lib, 0.0);
        assert_eq!(tree.select_slot(ROOT, UNIT), 0);
        tree.backpropagate(&[(ROOT, 0)]);
        assert_eq!(tree.score(ROOT, 0, UNIT), 0.25);
        assert_eq!(tree.score(ROOT, 1, UNIT), 0.5);
        assert_eq!(tree.select_slot(ROOT, UNIT), 1);
    }

    #[test]
    fn doubling_psi_keeps_argmax() {
        let psi = [0.1, 0.4, 0.2, 0.3];
        let visits = [3u64, 9, 1, 5];
        let total: u64 = visits.iter().sum();
        let arg = |scale: f64| {
            (0..4)
                .max_by(|&a, &b| {
                    score_of(psi[a] * scale, visits[a], total, UNIT)
                        .total_cmp(&score_of(psi[b] * scale, visits[b], total, UNIT))
                })
                .unwrap()
        };
        assert_eq!(arg(1.0), arg(2.0));
    }

    #[test]
    fn fresh_root_selects_itself() {
        let tree: Tree<f64> = Tree::new(StateVec::new(vec![0.0]), false);
        let (leaf, path) = tree.select_path(10, UNIT);
        assert_eq!(leaf, ROOT);
        assert!(path.is_empty());
    }

    #[test]
    fn path_stops_at_goal_and_depth_cap() {
        let lib = line_lib(&[0.0, 1.0]);
        let mut tree = Tree::new(StateVec::new(vec![0.0]), false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let beta = beta_distribution(&lib, &m1(0.0), 1.0, 0.0).unwrap();
        let cands = sample_candidates(&beta, 2, m1(0.0), &mut rng).unwrap();
        let psi = psi_prior(&cands, &lib, &m1(0.0), 1.0).unwrap();
        let goal_slot = psi.argmax();
        let children = (0..2)
            .map(|s| (StateVec::new(vec![s as f64]), s == goal_slot))
            .collect();
        let ids = tree.attach_expansion(ROOT, cands.clone(), psi.clone(), children).unwrap();
        let (leaf, path) = tree.select_path(10, UNIT);
        assert_eq!(leaf, ids[goal_slot]);
        assert!(tree.node(leaf).is_goal);
        assert_eq!(path, vec![(ROOT, goal_slot)]);
        assert_eq!(tree.select_path(10, UNIT), (leaf, path));

        assert!(tree.attach_expansion(ROOT, cands, psi, vec![]).is_err());
        let (leaf, path) = tree.select_path(0, UNIT);
        assert_eq!((leaf, path.len()), (ROOT, 0));
    }

    #[test]
    fn backpropagation_is_local() {
        let lib = line_lib(&[0.0, 1.0, 2.0]);
        let mut tree = expanded_tree(&lib, 0.0);
        tree.backpropagate(&[(ROOT, 1)]);
        tree.backpropagate(&[(ROOT, 1)]);
        tree.backpropagate(&[(ROOT, 2)]);
        assert_eq!(tree.root().expansion().unwrap().visits(), &[0, 2, 1]);
        assert_eq!(tree.best_root_slot(), Some((1, false)));
        assert_eq!(tree.plan_to(tree.root().expansion().unwrap().children()[1], &lib).len(), 1);
    }

    #[test]
    fn root_ties_are_flagged() {
        let lib = line_lib(&[-1.0, 1.0]);
        let mut tree = expanded_tree(&lib, 0.0);
        tree.backpropagate(&[(ROOT, 0)]);
        tree.backpropagate(&[(ROOT, 1)]);
        assert_eq!(tree.best_root_slot(), Some((0, true)));
    }
}
