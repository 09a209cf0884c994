//! Tree neural networks.
//!
//! A [`Tnn`] holds one dense network per operator and one per head. The
//! embedding of `f(t1, ..., ta)` is `N_f(E(t1) ++ ... ++ E(ta))`; arity-0
//! operators read the constant input `[1]`. Heads decode the root embedding.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{init_dense_with_rng, Activation, ActivationTrace, DenseNetwork, NetGradient};
use crate::term::Term;

/// Head name used by the single-objective tasks and the dataset format.
pub const DEFAULT_HEAD: &str = "head";

/// Input fed to arity-0 operator networks.
const CONSTANT_INPUT: [f64; 1] = [1.0];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorSignature {
    pub name: String,
    pub arity: usize,
    pub hidden_sizes: Vec<usize>,
    pub is_head: bool,
    /// Label length; only meaningful for heads.
    pub output_size: usize,
}

impl OperatorSignature {
    pub fn operator(name: impl Into<String>, arity: usize, hidden_sizes: Vec<usize>) -> Self {
        OperatorSignature { name: name.into(), arity, hidden_sizes, is_head: false, output_size: 0 }
    }

    pub fn head(name: impl Into<String>, output_size: usize, hidden_sizes: Vec<usize>) -> Self {
        OperatorSignature { name: name.into(), arity: 1, hidden_sizes, is_head: true, output_size }
    }

    /// Layer sizes for embedding dimension `dim`.
    pub fn dims(&self, dim: usize) -> Vec<usize> {
        let (input, output) = if self.is_head {
            (dim, self.output_size)
        } else if self.arity == 0 {
            (CONSTANT_INPUT.len(), dim)
        } else {
            (self.arity * dim, dim)
        };
        std::iter::once(input).chain(self.hidden_sizes.iter().copied()).chain(std::iter::once(output)).collect()
    }
}

/// Signatures for every operator in `arities` plus one head, all sharing the
/// same hidden layer sizes.
pub fn signatures_for(
    arities: &BTreeMap<String, usize>,
    head_output: usize,
    hidden_sizes: &[usize],
) -> Vec<OperatorSignature> {
    arities
        .iter()
        .map(|(name, &a)| OperatorSignature::operator(name.clone(), a, hidden_sizes.to_vec()))
        .chain(std::iter::once(OperatorSignature::head(DEFAULT_HEAD, head_output, hidden_sizes.to_vec())))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorNet {
    pub arity: usize,
    pub net: DenseNetwork,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tnn {
    dim: usize,
    operators: BTreeMap<String, OperatorNet>,
    heads: BTreeMap<String, DenseNetwork>,
}

/// A term with one target vector per head; components lie in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub term: Term,
    pub targets: BTreeMap<String, Vec<f64>>,
}

impl Example {
    /// Example with a single target for [`DEFAULT_HEAD`].
    pub fn new(term: Term, target: Vec<f64>) -> Self {
        Example { term, targets: BTreeMap::from([(DEFAULT_HEAD.to_string(), target)]) }
    }

    /// Target of [`DEFAULT_HEAD`], or of the only head present.
    pub fn target(&self) -> Option<&[f64]> {
        self.targets
            .get(DEFAULT_HEAD)
            .or_else(|| if self.targets.len() == 1 { self.targets.values().next() } else { None })
            .map(Vec::as_slice)
    }
}

/// Accumulated parameter gradients, keyed like the networks of a [`Tnn`].
///
/// Networks never touched are absent and treated as zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientStore {
    pub operators: BTreeMap<String, NetGradient>,
    pub heads: BTreeMap<String, NetGradient>,
    /// Number of examples summed into this store.
    pub count: usize,
}

impl GradientStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `other` into `self`, network by network in name order.
    pub fn merge(&mut self, other: &GradientStore) {
        fn merge_map(dst: &mut BTreeMap<String, NetGradient>, src: &BTreeMap<String, NetGradient>) {
            for (k, g) in src {
                match dst.get_mut(k) {
                    Some(d) => d.add_assign(g),
                    None => {
                        dst.insert(k.clone(), g.clone());
                    }
                }
            }
        }
        merge_map(&mut self.operators, &other.operators);
        merge_map(&mut self.heads, &other.heads);
        self.count += other.count;
    }

    pub fn is_zero(&self) -> bool {
        self.operators.values().chain(self.heads.values()).all(NetGradient::is_zero)
    }
}

/// Mean squared error `(1/n) Σ (o_i − t_i)²`.
pub fn loss(output: &[f64], target: &[f64]) -> Result<f64> {
    if output.len() != target.len() || output.is_empty() {
        return Err(Error::Dimension(format!(
            "loss over output of length {} and target of length {}",
            output.len(),
            target.len()
        )));
    }
    let n = output.len() as f64;
    Ok(output.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / n)
}

/// Quantity minimized by training, summed over the components of one head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Objective {
    /// Binary cross-entropy `−Σ [t ln o + (1−t) ln(1−o)]`. Paired with the
    /// sigmoid head, its gradient at the pre-activation is `o − t`, which
    /// does not vanish when the head saturates on the wrong side.
    #[default]
    CrossEntropy,
    /// [`loss`], the mean squared error.
    SquaredError,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::CrossEntropy => "cross-entropy",
            Objective::SquaredError => "squared-error",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-entropy" => Ok(Objective::CrossEntropy),
            "squared-error" => Ok(Objective::SquaredError),
            other => Err(Error::InvalidArgument(format!("unknown objective {other:?}"))),
        }
    }
}

// Keeps ln and 1/(o(1−o)) finite when a sigmoid rounds to exactly 0 or 1.
const PROB_EPS: f64 = 1e-12;

impl Objective {
    pub fn value(self, output: &[f64], target: &[f64]) -> Result<f64> {
        match self {
            Objective::SquaredError => loss(output, target),
            Objective::CrossEntropy => {
                loss(output, target)?; // length checks
                Ok(output
                    .iter()
                    .zip(target)
                    .map(|(&o, &t)| {
                        let o = o.clamp(PROB_EPS, 1.0 - PROB_EPS);
                        -(t * o.ln() + (1.0 - t) * (1.0 - o).ln())
                    })
                    .sum())
            }
        }
    }

    /// ∂value/∂output.
    pub fn gradient(self, output: &[f64], target: &[f64]) -> Vec<f64> {
        match self {
            Objective::SquaredError => {
                let n = output.len() as f64;
                output.iter().zip(target).map(|(o, t)| 2.0 * (o - t) / n).collect()
            }
            Objective::CrossEntropy => output
                .iter()
                .zip(target)
                .map(|(&o, &t)| {
                    let c = o.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    (o - t) / (c * (1.0 - c))
                })
                .collect(),
        }
    }
}

/// Initializes one network per signature.
///
/// Networks are drawn from one seeded stream in (operators, heads) × name
/// order, so the result does not depend on the order of `signatures`.
pub fn random_tnn(signatures: &[OperatorSignature], dim: usize, seed: u64) -> Result<Tnn> {
    if signatures.is_empty() {
        return Err(Error::InvalidArgument("no operator signatures".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("embedding dimension must be at least 1".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    if let Some(dup) = signatures.iter().find(|s| !names.insert(s.name.as_str())) {
        return Err(Error::DuplicateName(dup.name.clone()));
    }
    let mut sorted: Vec<&OperatorSignature> = signatures.iter().collect();
    sorted.sort_by(|a, b| (a.is_head, &a.name).cmp(&(b.is_head, &b.name)));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut operators = BTreeMap::new();
    let mut heads = BTreeMap::new();
    for sig in sorted {
        if sig.is_head {
            let net = init_dense_with_rng(&sig.dims(dim), Activation::Sigmoid, &mut rng)?;
            heads.insert(sig.name.clone(), net);
        } else {
            let net = init_dense_with_rng(&sig.dims(dim), Activation::Tanh, &mut rng)?;
            operators.insert(sig.name.clone(), OperatorNet { arity: sig.arity, net });
        }
    }
    Ok(Tnn { dim, operators, heads })
}

/// Distinct subterms of one term, children before parents.
struct Dag<'a> {
    nodes: Vec<DagNode<'a>>,
    root: usize,
}

struct DagNode<'a> {
    op: &'a str,
    net: &'a DenseNetwork,
    children: Vec<usize>,
}

impl Tnn {
    /// Assembles a TNN from existing networks, checking every size against `dim`.
    pub fn from_parts(
        dim: usize,
        operators: BTreeMap<String, OperatorNet>,
        heads: BTreeMap<String, DenseNetwork>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("embedding dimension 0".into()));
        }
        for (name, op) in &operators {
            let want_in = if op.arity == 0 { CONSTANT_INPUT.len() } else { op.arity * dim };
            if op.net.input_size() != want_in || op.net.output_size() != dim {
                return Err(Error::Dimension(format!(
                    "operator {name:?} of arity {} has dims {:?}, expected input {want_in} and output {dim}",
                    op.arity,
                    op.net.dims()
                )));
            }
        }
        for (name, net) in &heads {
            if operators.contains_key(name) {
                return Err(Error::DuplicateName(name.clone()));
            }
            if net.input_size() != dim {
                return Err(Error::Dimension(format!(
                    "head {name:?} has input size {}, expected {dim}",
                    net.input_size()
                )));
            }
        }
        Ok(Tnn { dim, operators, heads })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operators(&self) -> &BTreeMap<String, OperatorNet> {
        &self.operators
    }

    pub fn heads(&self) -> &BTreeMap<String, DenseNetwork> {
        &self.heads
    }

    pub fn operator(&self, name: &str) -> Result<&OperatorNet> {
        self.operators.get(name).ok_or_else(|| Error::UnknownOperator(name.to_string()))
    }

    pub fn head(&self, name: &str) -> Result<&DenseNetwork> {
        self.heads.get(name).ok_or_else(|| Error::UnknownHead(name.to_string()))
    }

    pub fn operator_mut(&mut self, name: &str) -> Result<&mut OperatorNet> {
        self.operators.get_mut(name).ok_or_else(|| Error::UnknownOperator(name.to_string()))
    }

    pub fn head_mut(&mut self, name: &str) -> Result<&mut DenseNetwork> {
        self.heads.get_mut(name).ok_or_else(|| Error::UnknownHead(name.to_string()))
    }

    pub fn parameter_count(&self) -> usize {
        self.operators.values().map(|o| o.net.parameter_count()).sum::<usize>()
            + self.heads.values().map(DenseNetwork::parameter_count).sum::<usize>()
    }

    /// Checks that every operator of `term` is known with the right arity.
    pub fn check_term(&self, term: &Term) -> Result<()> {
        for sub in term.subterms() {
            let op = self.operator(sub.op())?;
            if op.arity != sub.arity() {
                return Err(Error::ArityConflict { op: sub.op().to_string(), first: op.arity, second: sub.arity() });
            }
        }
        Ok(())
    }

    /// Checks operators, head names, target lengths and target range.
    pub fn check_example(&self, ex: &Example) -> Result<()> {
        self.check_term(&ex.term)?;
        if ex.targets.is_empty() {
            return Err(Error::InvalidArgument(format!("example {} has no targets", ex.term)));
        }
        for (h, target) in &ex.targets {
            let net = self.head(h)?;
            if target.len() != net.output_size() {
                return Err(Error::Dimension(format!(
                    "target for head {h:?} has length {}, head outputs {}",
                    target.len(),
                    net.output_size()
                )));
            }
            if let Some(v) = target.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidArgument(format!("target component {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn build_dag<'a>(&'a self, term: &'a Term) -> Result<Dag<'a>> {
        let mut nodes = Vec::new();
        let mut index: HashMap<(&'a str, Vec<usize>), usize> = HashMap::new();
        let root = self.intern(term, &mut nodes, &mut index)?;
        Ok(Dag { nodes, root })
    }

    fn intern<'a>(
        &'a self,
        t: &'a Term,
        nodes: &mut Vec<DagNode<'a>>,
        index: &mut HashMap<(&'a str, Vec<usize>), usize>,
    ) -> Result<usize> {
        let children = t.args().iter().map(|a| self.intern(a, nodes, index)).collect::<Result<Vec<_>>>()?;
        let key = (t.op(), children);
        if let Some(&i) = index.get(&key) {
            return Ok(i);
        }
        let op = self.operator(t.op())?;
        if op.arity != t.arity() {
            return Err(Error::ArityConflict { op: t.op().to_string(), first: op.arity, second: t.arity() });
        }
        let i = nodes.len();
        nodes.push(DagNode { op: t.op(), net: &op.net, children: key.1.clone() });
        index.insert(key, i);
        Ok(i)
    }

    /// Forward pass over distinct subterms; traces are indexed like `dag.nodes`.
    fn forward_dag(&self, dag: &Dag<'_>) -> Result<Vec<ActivationTrace>> {
        let mut traces: Vec<ActivationTrace> = Vec::with_capacity(dag.nodes.len());
        let mut input = Vec::new();
        for node in &dag.nodes {
            input.clear();
            if node.children.is_empty() {
                input.extend_from_slice(&CONSTANT_INPUT);
            } else {
                for &c in &node.children {
                    input.extend_from_slice(traces[c].output());
                }
            }
            traces.push(node.net.forward(&input)?);
        }
        Ok(traces)
    }

    /// Embedding of `term` in ℝ^d.
    ///
    /// Structurally equal subterms are evaluated once per call; the result is
    /// identical to the plain recursion.
    pub fn embed(&self, term: &Term) -> Result<Vec<f64>> {
        let dag = self.build_dag(term)?;
        let traces = self.forward_dag(&dag)?;
        Ok(traces[dag.root].output().to_vec())
    }

    /// Output of `head` on the embedding of `term`.
    pub fn infer(&self, term: &Term, head: &str) -> Result<Vec<f64>> {
        let net = self.head(head)?;
        let e = self.embed(term)?;
        net.output(&e)
    }

    /// Outputs of every head named in `heads`, sharing one embedding.
    pub fn infer_heads<'h, I>(&self, term: &Term, heads: I) -> Result<BTreeMap<String, Vec<f64>>>
    where
        I: IntoIterator<Item = &'h str>,
    {
        let e = self.embed(term)?;
        heads.into_iter().map(|h| Ok((h.to_string(), self.head(h)?.output(&e)?))).collect()
    }

    /// [`Tnn::backprop_example_with`] under the default objective.
    pub fn backprop_example(&self, ex: &Example) -> Result<(GradientStore, f64)> {
        self.backprop_example_with(ex, Objective::default())
    }

    /// Gradients of the objective summed over the heads of `ex`, with that sum.
    ///
    /// The tree is walked once per occurrence in depth-first, left-to-right
    /// order, so an operator used several times receives the sum of its
    /// per-occurrence contributions in that order.
    pub fn backprop_example_with(&self, ex: &Example, objective: Objective) -> Result<(GradientStore, f64)> {
        let dag = self.build_dag(&ex.term)?;
        let traces = self.forward_dag(&dag)?;
        let root_embedding = traces[dag.root].output();

        let mut store = GradientStore { count: 1, ..GradientStore::default() };
        let mut total_loss = 0.0;
        let mut root_grad = vec![0.0; self.dim];
        for (h, target) in &ex.targets {
            let net = self.head(h)?;
            let trace = net.forward(root_embedding)?;
            total_loss += objective.value(trace.output(), target)?;
            let g = store.heads.entry(h.clone()).or_insert_with(|| net.zero_gradient());
            let dx = net.backward_into(&trace, &objective.gradient(trace.output(), target), g)?;
            for (r, v) in root_grad.iter_mut().zip(&dx) {
                *r += v;
            }
        }
        self.backward_tree(&dag, &traces, dag.root, &root_grad, &mut store.operators)?;
        Ok((store, total_loss))
    }

    fn backward_tree(
        &self,
        dag: &Dag<'_>,
        traces: &[ActivationTrace],
        node: usize,
        upstream: &[f64],
        grads: &mut BTreeMap<String, NetGradient>,
    ) -> Result<()> {
        let n = &dag.nodes[node];
        let g = match grads.get_mut(n.op) {
            Some(g) => g,
            None => grads.entry(n.op.to_string()).or_insert_with(|| n.net.zero_gradient()),
        };
        let dx = n.net.backward_into(&traces[node], upstream, g)?;
        for (i, &c) in n.children.iter().enumerate() {
            self.backward_tree(dag, traces, c, &dx[i * self.dim..(i + 1) * self.dim], grads)?;
        }
        Ok(())
    }

    /// One gradient step on every network present in `grads`, dividing by `grads.count`.
    pub fn apply_update(&mut self, grads: &GradientStore, learning_rate: f64) -> Result<()> {
        // Validate everything before mutating so a failed step leaves the model intact.
        for (name, g) in &grads.operators {
            let mut probe = self.operator(name)?.net.clone();
            probe.apply_update(g, learning_rate, grads.count)?;
        }
        for (name, g) in &grads.heads {
            let mut probe = self.head(name)?.clone();
            probe.apply_update(g, learning_rate, grads.count)?;
        }
        for (name, g) in &grads.operators {
            self.operator_mut(name)?.net.apply_update(g, learning_rate, grads.count)?;
        }
        for (name, g) in &grads.heads {
            self.head_mut(name)?.apply_update(g, learning_rate, grads.count)?;
        }
        Ok(())
    }
}
