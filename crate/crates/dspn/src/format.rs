//! JSON documents for static networks (`.spn`), dynamic networks (`.dspn`)
//! and HMMs (`.hmm`). Floats are written with shortest round-trip
//! formatting, so save followed by load is exact.

use std::fs;
use std::path::Path;

use dspn_core::dspn::{BottomNetwork, DspnModel, TemplateNetwork, TopNetwork};
use dspn_core::hmm::DiscreteHmm;
use dspn_core::spn::{Node, NodeId, SpnGraph};
use serde::{Deserialize, Serialize};

use crate::IoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeDoc {
    Sum { children: Vec<usize>, weights: Vec<f64> },
    Product { children: Vec<usize> },
    Indicator { var: usize, value: u32 },
    Input { slot: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpnDoc {
    pub n_vars: usize,
    pub arities: Vec<usize>,
    #[serde(default)]
    pub n_interface_inputs: usize,
    pub nodes: Vec<NodeDoc>,
    pub roots: Vec<usize>,
}

impl SpnDoc {
    pub fn from_graph(g: &SpnGraph) -> Self {
        let ids = |cs: &[NodeId]| cs.iter().map(|c| c.0).collect();
        SpnDoc {
            n_vars: g.n_vars(),
            arities: g.arities().to_vec(),
            n_interface_inputs: g.n_interface_inputs(),
            nodes: g
                .nodes()
                .iter()
                .map(|n| match n {
                    Node::Sum { children, weights } => NodeDoc::Sum { children: ids(children), weights: weights.clone() },
                    Node::Product { children } => NodeDoc::Product { children: ids(children) },
                    Node::Indicator { var, value } => NodeDoc::Indicator { var: *var, value: *value },
                    Node::InterfaceInput { slot } => NodeDoc::Input { slot: *slot },
                })
                .collect(),
            roots: g.roots().iter().map(|r| r.0).collect(),
        }
    }

    /// Rebuilds the graph; weights must be normalized.
    pub fn to_graph(&self) -> Result<SpnGraph, IoError> {
        if self.n_vars != self.arities.len() {
            return Err(IoError::Format("n_vars differs from the number of arities".into()));
        }
        let ids = |cs: &[usize]| cs.iter().map(|&c| NodeId(c)).collect();
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                NodeDoc::Sum { children, weights } => Node::Sum { children: ids(children), weights: weights.clone() },
                NodeDoc::Product { children } => Node::Product { children: ids(children) },
                NodeDoc::Indicator { var, value } => Node::Indicator { var: *var, value: *value },
                NodeDoc::Input { slot } => Node::InterfaceInput { slot: *slot },
            })
            .collect();
        Ok(SpnGraph::new(nodes, ids(&self.roots), self.arities.clone(), self.n_interface_inputs)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub n_vars: usize,
    pub arities: Vec<usize>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspnDoc {
    pub signature: Signature,
    pub f_map: Vec<usize>,
    pub bottom: SpnDoc,
    pub template: SpnDoc,
    pub top: SpnDoc,
}

impl DspnDoc {
    pub fn from_model(m: &DspnModel) -> Self {
        DspnDoc {
            signature: Signature { n_vars: m.n_vars(), arities: m.arities().to_vec(), k: m.k() },
            f_map: m.template().f_map().to_vec(),
            bottom: SpnDoc::from_graph(m.bottom().graph()),
            template: SpnDoc::from_graph(m.template().graph()),
            top: SpnDoc::from_graph(m.top().graph()),
        }
    }

    /// Builds the model checking only that the parts fit together; use
    /// [`dspn_core::dspn::verify_stacking`] for the validity premises.
    pub fn to_model(&self) -> Result<DspnModel, IoError> {
        let template = TemplateNetwork::new(self.template.to_graph()?, self.f_map.clone())?;
        let m = DspnModel::new_unchecked(
            BottomNetwork::new(self.bottom.to_graph()?)?,
            template,
            TopNetwork::new(self.top.to_graph()?)?,
        )?;
        let s = &self.signature;
        if s.n_vars != m.n_vars() || s.arities != m.arities() || s.k != m.k() {
            return Err(IoError::Format("signature does not match the networks".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmDoc {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emissions: Vec<Vec<Vec<f64>>>,
    pub arities: Vec<usize>,
}

impl HmmDoc {
    pub fn from_hmm(h: &DiscreteHmm) -> Self {
        HmmDoc {
            initial: h.initial.clone(),
            transition: h.transition.clone(),
            emissions: h.emissions.clone(),
            arities: h.arities.clone(),
        }
    }

    pub fn to_hmm(&self) -> Result<DiscreteHmm, IoError> {
        Ok(DiscreteHmm::new(
            self.initial.clone(),
            self.transition.clone(),
            self.emissions.clone(),
            self.arities.clone(),
        )?)
    }
}

/// Any model file, told apart by its `format` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase")]
pub enum ModelFile {
    Spn(SpnDoc),
    Dspn(DspnDoc),
    Hmm(HmmDoc),
}

#[derive(Debug, Clone)]
pub enum Model {
    Spn(SpnGraph),
    Dspn(DspnModel),
    Hmm(DiscreteHmm),
}

impl ModelFile {
    pub fn to_model(&self) -> Result<Model, IoError> {
        Ok(match self {
            ModelFile::Spn(d) => Model::Spn(d.to_graph()?),
            ModelFile::Dspn(d) => Model::Dspn(d.to_model()?),
            ModelFile::Hmm(d) => Model::Hmm(d.to_hmm()?),
        })
    }
}

impl Model {
    pub fn to_file(&self) -> ModelFile {
        match self {
            Model::Spn(g) => ModelFile::Spn(SpnDoc::from_graph(g)),
            Model::Dspn(m) => ModelFile::Dspn(DspnDoc::from_model(m)),
            Model::Hmm(h) => ModelFile::Hmm(HmmDoc::from_hmm(h)),
        }
    }
}

pub fn to_json(m: &Model) -> String {
    serde_json::to_string_pretty(&m.to_file()).expect("model documents always serialize")
}

pub fn from_json(text: &str) -> Result<Model, IoError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| IoError::Parse { line: e.line(), message: e.to_string() })?;
    file.to_model()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, IoError> {
    from_json(&fs::read_to_string(path)?)
}

pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<(), IoError> {
    fs::write(path, to_json(m) + "\n")?;
    Ok(())
}

pub fn load_dspn(path: impl AsRef<Path>) -> Result<DspnModel, IoError> {
    match load_model(path)? {
        Model::Dspn(m) => Ok(m),
        _ => Err(IoError::Format("expected a dynamic network (format \"dspn\")".into())),
    }
}

pub fn load_hmm(path: impl AsRef<Path>) -> Result<DiscreteHmm, IoError> {
    match load_model(path)? {
        Model::Hmm(h) => Ok(h),
        _ => Err(IoError::Format("expected an HMM (format \"hmm\")".into())),
    }
}
