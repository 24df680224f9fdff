//! Versioned JSON store of per-topology design results.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Link, Partition, Topology};
use crate::synthesis::{ControllerGains, ObserverGains, RejectKind, TopologyCertificate};

pub const FORMAT_TAG: &str = "coalctl-gains/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedDesign {
    pub controller: ControllerGains,
    pub observer: ObserverGains,
    /// Closed-loop matrix of `[x; u; e]`.
    #[serde(with = "crate::serde_mat::matrix")]
    pub closed_loop: DMatrix<f64>,
    pub certificate: TopologyCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DesignStatus {
    Certified(Box<CertifiedDesign>),
    Rejected { stage: String, kind: RejectKind, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub topology: Topology,
    pub coalitions: Partition,
    #[serde(flatten)]
    pub status: DesignStatus,
}

impl TopologyRecord {
    pub fn design(&self) -> Option<&CertifiedDesign> {
        match &self.status {
            DesignStatus::Certified(d) => Some(d),
            DesignStatus::Rejected { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainStore {
    pub format: String,
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    pub links: Vec<Link>,
    /// Indexed by topology index.
    pub records: Vec<TopologyRecord>,
}

impl GainStore {
    pub fn certified(&self) -> impl Iterator<Item = (&Topology, &CertifiedDesign)> {
        self.records.iter().filter_map(|r| r.design().map(|d| (&r.topology, d)))
    }

    pub fn certified_indices(&self) -> Vec<usize> {
        self.certified().map(|(t, _)| t.index).collect()
    }

    pub fn design(&self, index: usize) -> Option<&CertifiedDesign> {
        self.records.get(index).and_then(TopologyRecord::design)
    }

    pub fn grand_index(&self) -> usize {
        self.records.len() - 1
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Store(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Tag {
            format: String,
        }
        let tag: Tag = serde_json::from_str(text).map_err(|e| Error::Store(e.to_string()))?;
        if tag.format != FORMAT_TAG {
            return Err(Error::Store(format!(
                "unsupported format `{}`, expected `{FORMAT_TAG}`",
                tag.format
            )));
        }
        let store: GainStore = serde_json::from_str(text).map_err(|e| Error::Store(e.to_string()))?;
        if store.records.len() != 1 << store.links.len()
            || store.records.iter().enumerate().any(|(i, r)| r.topology.index != i)
        {
            return Err(Error::Store("records do not cover the topology list in order".into()));
        }
        Ok(store)
    }

    /// Checks that the store was produced for this plant and link universe.
    pub fn check_compatible(&self, nx: usize, nu: usize, ny: usize, links: &[Link]) -> Result<()> {
        if (self.nx, self.nu, self.ny) != (nx, nu, ny) || self.links != links {
            return Err(Error::Store(format!(
                "store was built for n_x={}, n_u={}, n_y={}, links {:?}; config has n_x={nx}, n_u={nu}, n_y={ny}, links {:?}",
                self.nx, self.nu, self.ny, self.links, links
            )));
        }
        Ok(())
    }
}
