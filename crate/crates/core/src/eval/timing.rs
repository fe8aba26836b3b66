use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::explainers::TrainedExplainer;
use crate::gnn::GnnModel;
use crate::graphdata::Graph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub stderr_ms: f64,
    pub samples: usize,
}

impl TimingStats {
    pub fn from_samples(ms: &[f64]) -> Result<Self> {
        if ms.is_empty() {
            return Err(Error::domain("no timing samples"));
        }
        let n = ms.len() as f64;
        let mean = ms.iter().sum::<f64>() / n;
        let var = if ms.len() > 1 {
            ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Self {
            mean_ms: mean,
            stderr_ms: (var / n).sqrt(),
            samples: ms.len(),
        })
    }
}

/// Wall time in ms of `f` on each graph, after one untimed warm-up call on
/// the first graph. Calls run sequentially.
pub fn time_calls(graphs: &[&Graph], mut f: impl FnMut(&Graph) -> Result<()>) -> Result<Vec<f64>> {
    let Some(first) = graphs.first() else {
        return Ok(Vec::new());
    };
    f(first)?;
    graphs
        .iter()
        .map(|g| {
            let t = Instant::now();
            f(g)?;
            Ok(t.elapsed().as_secs_f64() * 1e3)
        })
        .collect()
}

/// Per-graph explanation time pooled over several trained explainers
/// (typically one per seed).
pub fn time_inference(explainers: &[&TrainedExplainer], model: &GnnModel, graphs: &[&Graph], k: usize) -> Result<TimingStats> {
    let mut all = Vec::with_capacity(explainers.len() * graphs.len());
    for te in explainers {
        all.extend(time_calls(graphs, |g| te.explain(model, g, k).map(|_| ()))?);
    }
    TimingStats::from_samples(&all)
}
