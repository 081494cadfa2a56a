//! Resource vectors and cosine-similarity matching.
//!
//! A resource is described by six numbers in trace-column order:
//! price per hour, MIPS, storage $/GB, RAM (GB), bandwidth (Mbps) and CPU
//! cores. Providers answer a request with their most similar pooled resource
//! and consumers keep the best-scoring proposal; both scans use
//! strict-greater updates so the earliest candidate wins a tie.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::MoneyAmount;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("resource {title:?}: component {component} is negative or not finite")]
    InvalidComponent { title: String, component: &'static str },
    #[error("resource {0:?} is the zero vector")]
    ZeroVector(String),
}

pub const COMPONENT_NAMES: [&str; 6] = [
    "price",
    "mips",
    "storage_price",
    "ram_gb",
    "bandwidth_mbps",
    "cpu_cores",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub title: String,
    /// Price per hour.
    pub price: MoneyAmount,
    pub mips: f64,
    /// Storage price in $/GB.
    pub storage_price: f64,
    pub ram_gb: f64,
    pub bandwidth_mbps: f64,
    pub cpu_cores: f64,
}

impl ResourceSpec {
    pub fn new(
        title: impl Into<String>,
        price: MoneyAmount,
        mips: f64,
        storage_price: f64,
        ram_gb: f64,
        bandwidth_mbps: f64,
        cpu_cores: f64,
    ) -> Result<Self, MatchError> {
        let spec = ResourceSpec {
            title: title.into(),
            price,
            mips,
            storage_price,
            ram_gb,
            bandwidth_mbps,
            cpu_cores,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        let v = self.vector();
        for (x, name) in v.iter().zip(COMPONENT_NAMES) {
            if !x.is_finite() || *x < 0.0 {
                return Err(MatchError::InvalidComponent {
                    title: self.title.clone(),
                    component: name,
                });
            }
        }
        if v.iter().all(|x| *x == 0.0) {
            return Err(MatchError::ZeroVector(self.title.clone()));
        }
        Ok(())
    }

    /// The six components; price enters as its decimal value, not base units.
    pub fn vector(&self) -> [f64; 6] {
        [
            self.price.to_f64(),
            self.mips,
            self.storage_price,
            self.ram_gb,
            self.bandwidth_mbps,
            self.cpu_cores,
        ]
    }

    /// Same resource with every component multiplied by `k`. The price is
    /// scaled in base units with truncation.
    pub fn scaled(&self, k: u64) -> ResourceSpec {
        ResourceSpec {
            title: self.title.clone(),
            price: self.price.checked_mul(k).unwrap_or(self.price),
            mips: self.mips * k as f64,
            storage_price: self.storage_price * k as f64,
            ram_gb: self.ram_gb * k as f64,
            bandwidth_mbps: self.bandwidth_mbps * k as f64,
            cpu_cores: self.cpu_cores * k as f64,
        }
    }
}

fn norm(v: &[f64; 6]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Cosine of the angle between two raw vectors, clamped to `[0, 1]`.
pub fn cosine_of(a: &[f64; 6], b: &[f64; 6]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(0.0, 1.0))
}

/// `Σ t_i e_i / (‖t‖ ‖e‖)` over the six components.
pub fn cosine_similarity(t: &ResourceSpec, e: &ResourceSpec) -> Result<f64, MatchError> {
    let (tv, ev) = (t.vector(), e.vector());
    if norm(&tv) == 0.0 {
        return Err(MatchError::ZeroVector(t.title.clone()));
    }
    cosine_of(&tv, &ev).ok_or_else(|| MatchError::ZeroVector(e.title.clone()))
}

/// A provider's pool of resources. Order matters: it breaks score ties.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalogue {
    entries: Vec<ResourceSpec>,
}

impl Catalogue {
    pub fn new(entries: Vec<ResourceSpec>) -> Self {
        Catalogue { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ResourceSpec] {
        &self.entries
    }

    pub fn iter(&self) -> core::slice::Iter<'_, ResourceSpec> {
        self.entries.iter()
    }

    pub fn contains(&self, title: &str) -> bool {
        self.entries.iter().any(|r| r.title == title)
    }

    /// Removes the first entry titled `title`.
    pub fn remove(&mut self, title: &str) -> Option<ResourceSpec> {
        let pos = self.entries.iter().position(|r| r.title == title)?;
        Some(self.entries.remove(pos))
    }

    /// Returns a resource to the pool (appended).
    pub fn put(&mut self, resource: ResourceSpec) {
        self.entries.push(resource);
    }

    pub fn titles(&self) -> Vec<&str> {
        self.entries.iter().map(|r| r.title.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match<'a> {
    pub index: usize,
    pub resource: &'a ResourceSpec,
    pub score: f64,
}

/// The catalogue entry most similar to `request`; `None` only for an empty
/// catalogue. Entries whose score cannot be computed are skipped.
pub fn best_match<'a>(request: &ResourceSpec, catalogue: &'a Catalogue) -> Option<Match<'a>> {
    let mut best: Option<Match<'a>> = None;
    for (index, resource) in catalogue.iter().enumerate() {
        let Ok(score) = cosine_similarity(request, resource) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(Match { index, resource, score });
        }
    }
    best
}

/// A provider's answer to a call for proposals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderReply<P> {
    pub provider: P,
    /// `None` for a refusal.
    pub offer: Option<Offer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub score: f64,
    pub resource: ResourceSpec,
}

/// Highest-scoring proposal in arrival order, first wins ties. `None` when
/// there are no proposals or every reply is a refusal.
pub fn select_best_proposal<P>(replies: &[ProviderReply<P>]) -> Option<(&P, &ResourceSpec)> {
    let mut best: Option<(&P, &Offer)> = None;
    for reply in replies {
        let Some(offer) = &reply.offer else { continue };
        if best.is_none_or(|(_, b)| offer.score > b.score) {
            best = Some((&reply.provider, offer));
        }
    }
    best.map(|(p, o)| (p, &o.resource))
}
