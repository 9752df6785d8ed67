//! Linear interpolation of language models with EM weight optimization on
//! development data.

use std::sync::Arc;

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::ngram::{LanguageModel, UnitKind};

/// Probability floor for a component that assigns zero (or -inf log) mass
/// to a scored event.
const PROB_FLOOR: f64 = 1e-99;

pub struct MixtureModel {
    components: Vec<Arc<dyn LanguageModel>>,
    /// per-component id remapping: mixture unit id -> component unit id
    remap: Vec<Vec<TokenId>>,
    weights: Vec<f64>,
}

impl MixtureModel {
    /// Components must share a unit kind and unit inventory (names may be
    /// ordered differently). Weights are validated to lie on the simplex
    /// within 1e-9 and renormalized exactly.
    pub fn new(components: Vec<Arc<dyn LanguageModel>>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::argument("mixture needs at least one component"));
        }
        if components.len() != weights.len() {
            return Err(Error::argument("one weight per component required"));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::argument("negative mixture weight"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::argument(format!("weights sum to {sum}, not 1")));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let first = &components[0];
        let mut remap = Vec::with_capacity(components.len());
        for (k, c) in components.iter().enumerate() {
            if c.unit_kind() != first.unit_kind() {
                return Err(Error::validation("components have different unit kinds"));
            }
            if c.num_units() != first.num_units() {
                return Err(Error::validation(format!(
                    "component {k} has {} units, expected {}",
                    c.num_units(),
                    first.num_units()
                )));
            }
            let mut map = Vec::with_capacity(first.num_units());
            for unit in 0..first.num_units() as TokenId {
                let name = first.unit_name(unit);
                let mapped = c.unit_id(name).ok_or_else(|| {
                    Error::validation(format!("component {k} lacks unit {name}"))
                })?;
                map.push(mapped);
            }
            remap.push(map);
        }
        Ok(MixtureModel {
            components,
            remap,
            weights,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Arc<dyn LanguageModel>] {
        &self.components
    }
}

impl LanguageModel for MixtureModel {
    fn unit_kind(&self) -> UnitKind {
        self.components[0].unit_kind()
    }

    fn log10_prob(&self, history: &[TokenId], unit: TokenId) -> f64 {
        let mut p = 0.0f64;
        for (k, c) in self.components.iter().enumerate() {
            let map = &self.remap[k];
            let h: Vec<TokenId> = history.iter().map(|&u| map[u as usize]).collect();
            p += self.weights[k] * 10f64.powf(c.log10_prob(&h, map[unit as usize]));
        }
        p.max(PROB_FLOOR).log10()
    }

    fn unit_id(&self, name: &str) -> Option<TokenId> {
        self.components[0].unit_id(name)
    }

    fn unit_name(&self, unit: TokenId) -> &str {
        self.components[0].unit_name(unit)
    }

    fn num_units(&self) -> usize {
        self.components[0].num_units()
    }

    fn bos(&self) -> TokenId {
        self.components[0].bos()
    }

    fn eos(&self) -> TokenId {
        self.components[0].eos()
    }

    fn unk(&self) -> TokenId {
        self.components[0].unk()
    }
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// EM for linear interpolation weights on development sentences.
///
/// Each iteration sets `w_k` to the mean posterior responsibility of
/// component `k` over scored events; the dev log likelihood never
/// decreases. Stops when the improvement drops below `tolerance` (natural
/// log) or after `max_iterations`.
pub fn mixture_em(
    components: &[Arc<dyn LanguageModel>],
    dev: &[Vec<String>],
    init_weights: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<EmResult> {
    // dry construction validates components + weights
    let mixture = MixtureModel::new(components.to_vec(), init_weights.to_vec())?;
    let mut warnings = Vec::new();

    // probability matrix: scored events x components
    let first = &components[0];
    let mut probs: Vec<Vec<f64>> = Vec::new();
    for sentence in dev {
        let mut history = vec![first.bos()];
        for token in sentence {
            match first.unit_id(token) {
                Some(id) => {
                    probs.push(event_probs(&mixture, &history, id, &mut warnings));
                    history.push(id);
                }
                None => history.push(first.unk()), // OOVs excluded
            }
        }
        probs.push(event_probs(&mixture, &history, first.eos(), &mut warnings));
    }
    if probs.is_empty() {
        return Err(Error::validation("no scorable events in development data"));
    }

    let k = components.len();
    let n = probs.len() as f64;
    let mut weights = mixture.weights().to_vec();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    loop {
        let mut ll = 0.0f64;
        let mut post_sum = vec![0.0f64; k];
        for event in &probs {
            let mix: f64 = weights.iter().zip(event).map(|(w, p)| w * p).sum();
            ll += mix.ln();
            for (sum, (w, p)) in post_sum.iter_mut().zip(weights.iter().zip(event)) {
                *sum += w * p / mix;
            }
        }
        if ll + 1e-12 < prev_ll {
            return Err(Error::Numeric(format!(
                "EM log likelihood decreased: {prev_ll} -> {ll}"
            )));
        }
        let improved = ll - prev_ll;
        prev_ll = ll;
        iterations += 1;
        if improved < tolerance || iterations >= max_iterations {
            break;
        }
        for (w, sum) in weights.iter_mut().zip(&post_sum) {
            *w = sum / n;
        }
    }
    Ok(EmResult {
        weights,
        log_likelihood: prev_ll,
        iterations,
        warnings,
    })
}

fn event_probs(
    mixture: &MixtureModel,
    history: &[TokenId],
    unit: TokenId,
    warnings: &mut Vec<String>,
) -> Vec<f64> {
    mixture
        .components
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let map = &mixture.remap[k];
            let h: Vec<TokenId> = history.iter().map(|&u| map[u as usize]).collect();
            let p = 10f64.powf(c.log10_prob(&h, map[unit as usize]));
            if p < PROB_FLOOR {
                if warnings.len() < 10 {
                    warnings.push(format!(
                        "component {k} assigned ~zero probability to an event; floored"
                    ));
                }
                PROB_FLOOR
            } else {
                p
            }
        })
        .collect()
}
