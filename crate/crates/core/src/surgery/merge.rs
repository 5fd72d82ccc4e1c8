use log::warn;
use serde::{Deserialize, Serialize};

use super::{commit, find_consumer, remix_inputs, SurgeryKind, SurgeryReport};
use crate::error::{arg_err, Error, Result};
use crate::kmeans::{kmeans, nearest_member, KMeansConfig};
use crate::layers::{ConvLayerParams, Layer, Network};
use crate::tensor::Tensor;

/// Which kernel represents a cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightVariant {
    /// The member kernel closest to the centroid.
    NearestFilter,
    /// The centroid itself.
    Centroid,
}

/// Which bias a merged kernel keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasVariant {
    /// The bias of the representative kernel.
    Matched,
    /// The mean bias over the cluster members.
    ClusterMean,
}

impl std::str::FromStr for WeightVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest_filter" | "nearest" => Ok(WeightVariant::NearestFilter),
            "centroid" => Ok(WeightVariant::Centroid),
            other => arg_err(format!("unknown weight variant '{other}' (nearest_filter, centroid)")),
        }
    }
}

impl std::str::FromStr for BiasVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" => Ok(BiasVariant::Matched),
            "cluster_mean" | "mean" => Ok(BiasVariant::ClusterMean),
            other => arg_err(format!("unknown bias variant '{other}' (matched, cluster_mean)")),
        }
    }
}

impl WeightVariant {
    /// The bias rule that goes with this weight rule.
    pub fn paired_bias(self) -> BiasVariant {
        match self {
            WeightVariant::NearestFilter => BiasVariant::Matched,
            WeightVariant::Centroid => BiasVariant::ClusterMean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeConfig {
    /// Number of kernels kept.
    pub k: usize,
    pub weight_variant: WeightVariant,
    pub bias_variant: BiasVariant,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub exhaustive_limit: usize,
}

impl MergeConfig {
    pub fn new(k: usize, weight_variant: WeightVariant, seed: u64) -> Self {
        let defaults = KMeansConfig::new(k, seed);
        Self {
            k,
            weight_variant,
            bias_variant: weight_variant.paired_bias(),
            seed,
            max_iters: defaults.max_iters,
            tol: defaults.tol,
            restarts: defaults.restarts,
            exhaustive_limit: defaults.exhaustive_limit,
        }
    }

    fn kmeans_config(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            seed: self.seed,
            max_iters: self.max_iters,
            tol: self.tol,
            restarts: self.restarts,
            exhaustive_limit: self.exhaustive_limit,
        }
    }
}

/// Shrinks conv layer `layer_index` to `cfg.k` kernels by clustering the flattened kernels.
///
/// Merged channels are ordered by their lowest member index. The consumer's
/// incoming weights for a merged channel are the sum over its members; the
/// consumer's biases are left alone.
pub fn merge_layer(model: &mut Network, layer_index: usize, cfg: &MergeConfig) -> Result<SurgeryReport> {
    let consumer = find_consumer(model, layer_index)?;
    let params = model.layers()[layer_index].as_conv().expect("find_consumer checked conv").clone();
    let (n, d, k) = (params.out_channels(), params.in_channels(), params.kernel_size());
    if cfg.k < 1 || cfg.k > n {
        return Err(Error::Surgery { layer: layer_index, message: format!("cannot merge {n} kernels into {}", cfg.k) });
    }
    if consumer.is_fc {
        warn!("merging conv layer {layer_index}, which feeds fully connected layer {}", consumer.index);
    }
    let p = params.kernel_len();
    let points = params.weights().reshape(&[n, p])?;
    let outcome = kmeans(&points, &cfg.kmeans_config())?;
    let representatives = nearest_member(&points, &outcome)?;

    let mut clusters: Vec<(Vec<usize>, usize)> = outcome.members().into_iter().zip(0..).collect();
    clusters.sort_by_key(|(members, _)| members[0]);

    let weights = points.data();
    let biases = params.biases().data();
    let mut new_weights = Vec::with_capacity(cfg.k * p);
    let mut new_biases = Vec::with_capacity(cfg.k);
    for (members, cluster) in &clusters {
        let rep = representatives[*cluster];
        match cfg.weight_variant {
            WeightVariant::NearestFilter => new_weights.extend_from_slice(&weights[rep * p..(rep + 1) * p]),
            WeightVariant::Centroid => {
                new_weights.extend_from_slice(&outcome.centroids.data()[cluster * p..(cluster + 1) * p])
            }
        }
        new_biases.push(match cfg.bias_variant {
            BiasVariant::Matched => biases[rep],
            BiasVariant::ClusterMean => {
                (members.iter().map(|&m| biases[m] as f64).sum::<f64>() / members.len() as f64) as f32
            }
        });
    }
    let mixes: Vec<Vec<(usize, f32)>> =
        clusters.iter().map(|(members, _)| members.iter().map(|&m| (m, 1.0)).collect()).collect();

    let producer = Layer::Conv(ConvLayerParams::new(
        Tensor::new(&[cfg.k, d, k, k], new_weights)?,
        Tensor::new(&[cfg.k], new_biases)?,
    )?);
    let rewired = remix_inputs(&model.layers()[consumer.index], consumer, &mixes)?;
    let params_before = model.param_count();
    commit(model, layer_index, producer, consumer.index, rewired)?;
    Ok(SurgeryReport {
        kind: SurgeryKind::Merge,
        layer: layer_index,
        consumer: consumer.index,
        kernels_before: n,
        kernels_after: cfg.k,
        params_before,
        params_after: model.param_count(),
        distortion: Some(outcome.distortion),
    })
}
