//! Data protocols: how one replicate's old, new and test sets are drawn.

use kprior::data::{load_dense_csv, load_sparse, make_moons, ordered_splits, random_split, standardize, SplitSpec};
use kprior::mlp::{MlpSpec, OutputKind};
use kprior::{AdaptationTask, ExpFamily, FeatureMap, LabeledData, ModelKind};

use crate::config::{DataSource, ExperimentConfig, ModelSpec, TaskKind};
use crate::error::{BenchError, Result};

/// SplitMix64 finalizer, used to derive every seed from the master seed.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inputs of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub old: LabeledData,
    pub new: LabeledData,
    pub test: LabeledData,
    /// Old-row indices deleted by Remove Data.
    pub removed: Vec<usize>,
}

/// Moons protocol: five x-ordered blocks of one draw; blocks 1–3 are the
/// old data, block 4 the new data. The test set is an independent draw.
pub fn moons_replicate(n: usize, noise: f64, seed: u64) -> Result<Replicate> {
    let d = make_moons(n, noise, seed)?;
    let splits = ordered_splits(&d, 5)?;
    let old_idx: Vec<usize> = splits[..3].concat();
    Ok(Replicate {
        old: d.select(&old_idx)?,
        new: d.select(&splits[3])?,
        test: make_moons(n, noise, splitmix64(seed))?,
        removed: Vec::new(),
    })
}

/// File protocol: a stratified 20% test split, then 25% of the remainder as
/// new data. Inputs are standardized with the old rows' statistics.
pub fn file_replicate(data: &LabeledData, seed: u64) -> Result<Replicate> {
    let (test_idx, rest_idx) = random_split(
        data,
        &SplitSpec {
            fraction: 0.2,
            seed,
            stratify: true,
        },
    )?;
    let rest = data.select(&rest_idx)?;
    let (new_idx, old_idx) = random_split(
        &rest,
        &SplitSpec {
            fraction: 0.25,
            seed: splitmix64(seed),
            stratify: true,
        },
    )?;
    let old = rest.select(&old_idx)?;
    let (old, others, _) = standardize(&old, &[&rest.select(&new_idx)?, &data.select(&test_idx)?])?;
    let [new, test]: [LabeledData; 2] = others.try_into().expect("two sets were standardized");
    Ok(Replicate {
        old,
        new,
        test,
        removed: Vec::new(),
    })
}

pub fn load_source(source: &DataSource) -> Result<Option<LabeledData>> {
    Ok(match source {
        DataSource::Moons { .. } => None,
        DataSource::Sparse(p) => Some(load_sparse(p)?),
        DataSource::Csv { path, label_column } => Some(load_dense_csv(path, label_column)?),
    })
}

/// Draws replicate `seed` and picks the rows a Remove Data task deletes.
pub fn build_replicate(cfg: &ExperimentConfig, loaded: Option<&LabeledData>, seed: u64) -> Result<Replicate> {
    let mut rep = match (&cfg.data, loaded) {
        (DataSource::Moons { n, noise }, _) => moons_replicate(*n, *noise, seed)?,
        (_, Some(d)) => file_replicate(d, seed)?,
        (_, None) => return Err(BenchError::Config("data source was not loaded".into())),
    };
    if cfg.task == TaskKind::RemoveData {
        let (removed, _) = random_split(
            &rep.old,
            &SplitSpec {
                fraction: cfg.remove_frac,
                seed: splitmix64(seed ^ 0x5EED),
                stratify: false,
            },
        )?;
        rep.removed = removed;
    }
    Ok(rep)
}

/// Model class for `spec` on data shaped like `data`.
pub fn model_kind(spec: &ModelSpec, data: &LabeledData) -> Result<ModelKind> {
    let d = data.input_dim();
    Ok(match spec {
        ModelSpec::Glm { degree } => ModelKind::Glm {
            family: ExpFamily::Bernoulli,
            map: FeatureMap::new(*degree, true, d)?,
        },
        ModelSpec::Mlp { hidden, activation } => {
            let classes = data.labels.iter().fold(0.0f64, |m, &y| m.max(y)) as usize + 1;
            let (output, k) = if classes <= 2 {
                (OutputKind::Sigmoid, 1)
            } else {
                (OutputKind::Softmax(classes), classes)
            };
            let mut sizes = vec![d];
            sizes.extend_from_slice(hidden);
            sizes.push(k);
            ModelKind::Mlp(MlpSpec::new(sizes, *activation, output)?)
        }
    })
}

/// The adaptation task of the grid for replicate `rep`.
pub fn make_task(cfg: &ExperimentConfig, rep: &Replicate) -> Result<AdaptationTask> {
    Ok(match cfg.task {
        TaskKind::AddData => AdaptationTask::AddData(rep.new.clone()),
        TaskKind::RemoveData => AdaptationTask::RemoveData(rep.removed.clone()),
        TaskKind::ChangeRegularizer => AdaptationTask::ChangeRegularizer(cfg.delta_new),
        TaskKind::ChangeModelClass => {
            let spec = cfg
                .model_new
                .as_ref()
                .ok_or_else(|| BenchError::Config("change-model-class needs model-new".into()))?;
            AdaptationTask::ChangeModelClass(model_kind(spec, &rep.old)?)
        }
    })
}

/// Rows the retrained model sees.
pub fn batch_data(cfg: &ExperimentConfig, rep: &Replicate) -> Result<LabeledData> {
    Ok(match cfg.task {
        TaskKind::AddData => rep.old.concat(&rep.new)?,
        TaskKind::RemoveData => rep.old.without(&rep.removed)?,
        _ => rep.old.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // first outputs of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn moons_blocks() {
        let r = moons_replicate(500, 0.1, 3).unwrap();
        assert_eq!((r.old.len(), r.new.len(), r.test.len()), (300, 100, 500));
        let old_max = r.old.inputs.column(0).max();
        let new_min = r.new.inputs.column(0).min();
        assert!(old_max <= new_min);
        assert_ne!(r.test, moons_replicate(500, 0.1, 3).unwrap().old);
    }

    #[test]
    fn file_protocol_sizes() {
        let d = make_moons(100, 0.2, 1).unwrap();
        let r = file_replicate(&d, 9).unwrap();
        assert_eq!(r.test.len(), 20);
        assert_eq!(r.old.len() + r.new.len(), 80);
        assert_eq!(r.new.len(), 20);
        for j in 0..2 {
            assert!(r.old.inputs.column(j).mean().abs() <= 1e-12);
        }
    }
}
