//! Named model architectures and the seeded hyper-parameter grid that
//! fills out the base-learner library for ensembles.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::channels::{DEFAULT_SEGMENT_LEN, N_CHANNELS};
use crate::nn::{validate_network_spec, LayerSpec, Network, DEFAULT_DROPOUT_P};
use crate::{Error, Result, N_CLASSES};

/// One library entry: an ordered layer spec plus its training budget and
/// weight-initialization seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCatalogEntry {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub epochs: usize,
    pub seed: u64,
}

impl NetworkCatalogEntry {
    pub fn build(&self, input_len: usize, input_channels: usize) -> Result<Network> {
        Network::new(input_len, input_channels, self.layers.clone(), self.seed)
    }

    /// Compact human-readable form, one token per layer.
    pub fn spec_string(&self) -> String {
        spec_string_of(&self.layers)
    }
}

/// One token per layer, e.g. `conv8-4 maxpool4 dropout0.5 dense4 softmax`.
pub fn spec_string_of(layers: &[LayerSpec]) -> String {
    let mut parts = Vec::new();
    for l in layers {
        parts.push(match l {
            LayerSpec::Conv {
                kernel_size,
                n_kernels,
                stride,
                ..
            } => {
                if *stride == 1 {
                    format!("conv{kernel_size}-{n_kernels}")
                } else {
                    format!("conv{kernel_size}-{n_kernels}/s{stride}")
                }
            }
            LayerSpec::MaxPool { pool_size, stride } => {
                if *stride == 1 {
                    format!("maxpool{pool_size}")
                } else {
                    format!("maxpool{pool_size}/s{stride}")
                }
            }
            LayerSpec::Dropout { p } => format!("dropout{p}"),
            LayerSpec::Dense { units } => format!("dense{units}"),
            LayerSpec::Softmax => "softmax".to_string(),
        });
    }
    parts.join(" ")
}

fn tail() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dropout {
            p: DEFAULT_DROPOUT_P,
        },
        LayerSpec::Dense { units: N_CLASSES },
        LayerSpec::Softmax,
    ]
}

fn blocks(kernels: &[usize], pool: usize, repeats: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for &k in kernels {
        for _ in 0..repeats {
            layers.push(LayerSpec::conv(8, k));
            layers.push(LayerSpec::maxpool(pool));
        }
    }
    layers.extend(tail());
    layers
}

/// The six named models. All use kernel size 8, stride 1, SAME padding,
/// Leaky ReLU, dropout before a 4-way dense + softmax head. Counting
/// convolutional plus dense layers: A has 2, B 5, C 21, D 6, E 21, F 7.
pub fn build_model(name: char) -> Result<Vec<LayerSpec>> {
    Ok(match name.to_ascii_uppercase() {
        'A' => blocks(&[4], 4, 1),
        'B' => blocks(&[4, 8, 16, 32], 8, 1),
        'C' => blocks(&[4, 8, 16, 32], 4, 5),
        'D' => blocks(&[96, 256, 384, 384, 256], 8, 1),
        'E' => blocks(&[96, 256, 384, 384, 256], 2, 4),
        'F' => blocks(&[128, 256, 512, 1024, 1024, 512], 8, 1),
        other => return Err(Error::config(format!("unknown model name '{other}'"))),
    })
}

pub const NAMED_MODELS: [char; 6] = ['A', 'B', 'C', 'D', 'E', 'F'];

/// Count of layers under the convention above (conv and dense count,
/// pooling/dropout/softmax do not).
pub fn counted_layers(layers: &[LayerSpec]) -> usize {
    layers
        .iter()
        .filter(|l| matches!(l, LayerSpec::Conv { .. } | LayerSpec::Dense { .. }))
        .count()
}

/// Hyper-parameter vocabularies the grid draws from.
#[derive(Debug, Clone)]
pub struct GridVocab {
    /// Total counted layers per entry (convolutions + the dense head).
    pub layer_counts: Vec<usize>,
    pub kernel_counts: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    pub strides: Vec<usize>,
    pub pool_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
}

impl Default for GridVocab {
    fn default() -> GridVocab {
        GridVocab {
            layer_counts: vec![6, 7, 11, 21],
            // 98 appears alongside 96 in the sources this grid mirrors;
            // both are kept verbatim.
            kernel_counts: vec![2, 4, 8, 16, 32, 98, 128, 256, 384, 512, 1024],
            kernel_sizes: vec![2, 4, 8],
            strides: vec![1, 2],
            pool_sizes: vec![2, 4, 8],
            epochs: vec![20, 50, 100],
        }
    }
}

impl GridVocab {
    /// A reduced vocabulary whose entries train in seconds: few layers,
    /// narrow kernels, short epoch budgets. Used by the desk-scale
    /// benchmark library.
    pub fn desk_scale() -> GridVocab {
        GridVocab {
            layer_counts: vec![2, 3],
            kernel_counts: vec![2, 4, 8],
            kernel_sizes: vec![2, 4, 8],
            strides: vec![1, 2],
            pool_sizes: vec![2, 4, 8],
            epochs: vec![20],
        }
    }
}

fn pick<T: Copy>(rng: &mut ChaCha20Rng, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

/// Arrange values into a non-decreasing-then-non-increasing sequence:
/// sorted even ranks ascend, odd ranks descend after the peak.
fn unimodal(mut values: Vec<usize>) -> Vec<usize> {
    values.sort_unstable();
    let mut rising = Vec::new();
    let mut falling = Vec::new();
    for (i, v) in values.into_iter().enumerate() {
        if i % 2 == 0 {
            rising.push(v);
        } else {
            falling.push(v);
        }
    }
    falling.reverse();
    rising.extend(falling);
    rising
}

fn draw_grid_entry(rng: &mut ChaCha20Rng, vocab: &GridVocab, index: usize) -> NetworkCatalogEntry {
    let seed: u64 = rng.random();
    let counted = pick(rng, &vocab.layer_counts);
    let n_conv = counted.saturating_sub(1).max(1);
    let kernel_size = pick(rng, &vocab.kernel_sizes);
    let stride = pick(rng, &vocab.strides);
    let pool_size = pick(rng, &vocab.pool_sizes);
    let pool_stride = pick(rng, &vocab.strides);
    let epochs = pick(rng, &vocab.epochs);
    let counts = unimodal(
        (0..n_conv)
            .map(|_| pick(rng, &vocab.kernel_counts))
            .collect(),
    );
    let mut layers = Vec::new();
    for k in counts {
        layers.push(LayerSpec::Conv {
            kernel_size,
            n_kernels: k,
            stride,
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
        });
        layers.push(LayerSpec::MaxPool {
            pool_size,
            stride: pool_stride,
        });
    }
    layers.extend(tail());
    NetworkCatalogEntry {
        name: format!("G{index:02}"),
        layers,
        epochs,
        seed,
    }
}

fn push_unique(
    entries: &mut Vec<NetworkCatalogEntry>,
    seen: &mut HashSet<String>,
    entry: NetworkCatalogEntry,
) -> bool {
    let key = entry.spec_string();
    if seen.contains(&key) {
        return false;
    }
    validate_network_spec(DEFAULT_SEGMENT_LEN, N_CHANNELS, &entry.layers)
        .expect("generated spec must be shape-sound");
    seen.insert(key);
    entries.push(entry);
    true
}

/// Enumerate the base-learner library: the six named models first, then
/// unique seeded grid draws until `target_count` entries exist. A pure
/// function of (vocab, target_count, master_seed).
pub fn enumerate_library(
    vocab: &GridVocab,
    target_count: usize,
    master_seed: u64,
) -> Result<Vec<NetworkCatalogEntry>> {
    if target_count < NAMED_MODELS.len() {
        return Err(Error::config(format!(
            "target_count {target_count} below the {} named models",
            NAMED_MODELS.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    let mut entries = Vec::with_capacity(target_count);
    let mut seen = HashSet::new();
    for name in NAMED_MODELS {
        let entry = NetworkCatalogEntry {
            name: name.to_string(),
            layers: build_model(name)?,
            epochs: 50,
            seed: rng.random(),
        };
        push_unique(&mut entries, &mut seen, entry);
    }
    let mut stale = 0usize;
    while entries.len() < target_count {
        let entry = draw_grid_entry(&mut rng, vocab, entries.len());
        if push_unique(&mut entries, &mut seen, entry) {
            stale = 0;
        } else {
            stale += 1;
            if stale > 10_000 {
                return Err(Error::config(format!(
                    "grid exhausted after {} unique entries (target {target_count})",
                    entries.len()
                )));
            }
        }
    }
    Ok(entries)
}

/// Desk-scale benchmark library: Model A plus small grid entries that all
/// train in seconds on a laptop core. Same enumeration machinery, reduced
/// vocabulary.
pub fn benchmark_library(
    target_count: usize,
    master_seed: u64,
) -> Result<Vec<NetworkCatalogEntry>> {
    if target_count == 0 {
        return Err(Error::config("benchmark library needs at least one entry"));
    }
    let vocab = GridVocab::desk_scale();
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    let mut entries = Vec::with_capacity(target_count);
    let mut seen = HashSet::new();
    push_unique(
        &mut entries,
        &mut seen,
        NetworkCatalogEntry {
            name: "A".to_string(),
            layers: build_model('A')?,
            epochs: 20,
            seed: rng.random(),
        },
    );
    let mut stale = 0usize;
    while entries.len() < target_count {
        let entry = draw_grid_entry(&mut rng, &vocab, entries.len());
        if push_unique(&mut entries, &mut seen, entry) {
            stale = 0;
        } else {
            stale += 1;
            if stale > 10_000 {
                return Err(Error::config(format!(
                    "desk-scale grid exhausted after {} unique entries (target {target_count})",
                    entries.len()
                )));
            }
        }
    }
    Ok(entries)
}

/// One line per entry: name, spec, epochs, seed. Written next to trained
/// libraries for auditability.
pub fn library_manifest(entries: &[NetworkCatalogEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.name,
            e.spec_string(),
            e.epochs,
            e.seed
        ));
    }
    out
}
