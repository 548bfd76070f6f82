use thiserror::Error;

use crate::spn::NodeId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("node {node} references missing child {child}")]
    DanglingChild { node: usize, child: usize },
    #[error("graph contains a cycle through node {0}")]
    Cycle(usize),
    #[error("malformed node {node}: {reason}")]
    MalformedNode { node: usize, reason: &'static str },
    #[error("root {0} is not a node of the graph")]
    BadRoot(usize),
    #[error("no scope assigned to interface slot {0}")]
    MissingInputScope(usize),
    #[error("expected {expected} interface values, got {got}")]
    InterfaceArity { expected: usize, got: usize },
    #[error("evidence covers {got} variables, graph has {expected}")]
    EvidenceWidth { expected: usize, got: usize },
    #[error("variable {var} observed as {value} but arity is {arity}")]
    ArityViolation { var: usize, value: u32, arity: usize },
    #[error("graph is not complete and decomposable")]
    InvalidGraph,
    #[error("conditioning evidence has probability zero")]
    ZeroEvidence,
    #[error("query and evidence both assign variable {0}")]
    Disjointness(usize),
    #[error("conditional queries need a graph without interface inputs")]
    InterfaceInputsPresent,
    #[error("sequence is empty")]
    EmptySequence,
    #[error("template output root {0} has no indicator descendant")]
    DegenerateTemplate(usize),
    #[error("signature mismatch: {0}")]
    SignatureMismatch(&'static str),
    #[error("interface map is not a bijection")]
    NotBijection,
    #[error("model violates the stacking validity premises")]
    NotInvariant,
    #[error("need at least {needed} samples for independence tests, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),
    #[error("sequence {0} has probability zero under the model")]
    NumericalUnderflow(usize),
    #[error("sampling left variable {var} of slice {slice} unassigned")]
    IncompleteSample { slice: usize, var: usize },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("node {0:?} is not a product node")]
    NotProduct(NodeId),
}
