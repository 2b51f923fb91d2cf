//! Client datasets: LEAF FEMNIST shards, a synthetic non-IID generator, and the
//! writer-to-satellite partition.

mod leaf;
mod synthetic;

pub use leaf::{load_leaf_femnist, parse_leaf_shard, FEMNIST_CLASSES};
pub use synthetic::{synthetic_noniid, SyntheticParams};

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fl::LocalDataset;
use crate::orbital::SatelliteId;

#[derive(Debug, Clone, PartialEq)]
pub struct WriterDataset {
    pub writer_id: String,
    pub samples: LocalDataset,
}

/// Rows `rows` of writer `writer_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub writer_id: String,
    pub rows: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartitionPlan {
    pub shards: BTreeMap<SatelliteId, Vec<Shard>>,
}

impl PartitionPlan {
    pub fn sample_count(&self, sat: SatelliteId) -> usize {
        self.shards.get(&sat).map_or(0, |v| v.iter().map(|s| s.rows.len()).sum())
    }

    /// Builds each satellite's dataset from `writers` (looked up by id).
    pub fn materialize(&self, writers: &[WriterDataset]) -> Result<BTreeMap<SatelliteId, LocalDataset>> {
        let by_id: BTreeMap<&str, &WriterDataset> = writers.iter().map(|w| (w.writer_id.as_str(), w)).collect();
        let dim = writers.first().map_or(1, |w| w.samples.dim);
        let mut out = BTreeMap::new();
        for (sat, shards) in &self.shards {
            let mut d = LocalDataset::empty(dim);
            for s in shards {
                let w = by_id
                    .get(s.writer_id.as_str())
                    .ok_or_else(|| Error::InvalidInput(format!("plan references unknown writer {}", s.writer_id)))?;
                d.extend(&w.samples.take(s.rows.clone()));
            }
            out.insert(*sat, d);
        }
        Ok(out)
    }
}

fn canonical_shuffle(writers: &[WriterDataset], seed: u64) -> Result<Vec<&WriterDataset>> {
    let mut order: Vec<&WriterDataset> = writers.iter().collect();
    order.sort_by(|a, b| a.writer_id.cmp(&b.writer_id));
    if let Some(p) = order.windows(2).find(|p| p[0].writer_id == p[1].writer_id) {
        return Err(Error::InvalidInput(format!("duplicate writer id {}", p[0].writer_id)));
    }
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order)
}

/// Reserves `ceil(frac * n)` writers (at least one when n >= 2) as a pooled test set.
/// Returns the remaining training writers and the test set.
pub fn split_test_writers(writers: Vec<WriterDataset>, frac: f64, seed: u64) -> Result<(Vec<WriterDataset>, LocalDataset)> {
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::InvalidInput(format!("test fraction {frac} outside [0, 1)")));
    }
    let dim = writers
        .first()
        .map(|w| w.samples.dim)
        .ok_or_else(|| Error::EmptyDataset("no writers".into()))?;
    let order: Vec<String> = canonical_shuffle(&writers, seed ^ 0x7e57)?
        .iter()
        .map(|w| w.writer_id.clone())
        .collect();
    let mut n_test = (frac * order.len() as f64).ceil() as usize;
    if frac > 0.0 && order.len() >= 2 {
        n_test = n_test.clamp(1, order.len() - 1);
    }
    let test_ids: BTreeSet<&str> = order[..n_test].iter().map(String::as_str).collect();
    let mut test = LocalDataset::empty(dim);
    let mut train = Vec::new();
    for w in writers.iter() {
        if test_ids.contains(w.writer_id.as_str()) {
            test.extend(&w.samples);
        }
    }
    for w in writers {
        if !test_ids.contains(w.writer_id.as_str()) {
            train.push(w);
        }
    }
    Ok((train, test))
}

/// Deals writers round-robin, in a seeded order, to `sats`. Each satellite keeps at most
/// `clip.1` samples and draws further writers until it holds at least `clip.0`.
pub fn partition_to_satellites(
    writers: &[WriterDataset],
    sats: &[SatelliteId],
    clip: (usize, usize),
    seed: u64,
) -> Result<PartitionPlan> {
    let (lo, hi) = clip;
    if lo > hi || hi == 0 {
        return Err(Error::InvalidInput(format!("invalid clip {clip:?}")));
    }
    let mut queue = canonical_shuffle(writers, seed)?.into_iter().filter(|w| !w.samples.is_empty());
    let mut plan = PartitionPlan::default();
    let mut counts: BTreeMap<SatelliteId, usize> = sats.iter().map(|s| (*s, 0)).collect();
    let target = lo.max(1);
    loop {
        let needy: Vec<SatelliteId> = counts.iter().filter(|(_, c)| **c < target).map(|(s, _)| *s).collect();
        if needy.is_empty() {
            break;
        }
        for sat in needy {
            let Some(w) = queue.next() else {
                let shortfall: usize = counts.values().map(|c| target.saturating_sub(*c)).sum();
                return Err(Error::InsufficientData(format!(
                    "writers exhausted: {shortfall} more samples needed to give {} satellites at least {target} each",
                    counts.len()
                )));
            };
            let count = counts.get_mut(&sat).expect("known satellite");
            let take = w.samples.n().min(hi - *count);
            plan.shards.entry(sat).or_default().push(Shard {
                writer_id: w.writer_id.clone(),
                rows: 0..take,
            });
            *count += take;
        }
    }
    Ok(plan)
}

/// Dataset source as given on the command line:
/// `femnist:<dir>` or `synthetic[:key=value,...]`.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Femnist(PathBuf),
    Synthetic(SyntheticParams),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticParams::default())
    }
}

impl FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "femnist" if !rest.is_empty() => Ok(DatasetSource::Femnist(PathBuf::from(rest))),
            "femnist" => Err(Error::Config("femnist dataset needs a directory: femnist:<path>".into())),
            "synthetic" => {
                let mut p = SyntheticParams::default();
                for kv in rest.split(',').filter(|kv| !kv.is_empty()) {
                    let (k, v) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("synthetic parameter {kv:?} is not key=value")))?;
                    p.set(k.trim(), v.trim())?;
                }
                Ok(DatasetSource::Synthetic(p))
            }
            _ => Err(Error::Config(format!(
                "unknown dataset {s:?}; expected femnist:<path> or synthetic[:k=v,...]"
            ))),
        }
    }
}

impl std::fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetSource::Femnist(p) => write!(f, "femnist:{}", p.display()),
            DatasetSource::Synthetic(p) => write!(f, "synthetic:{p}"),
        }
    }
}

/// Training shards per satellite plus the pooled test set.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub clients: BTreeMap<SatelliteId, LocalDataset>,
    pub test: LocalDataset,
    pub input_dim: usize,
    pub classes: usize,
}

/// Loads or generates writers, reserves 10% as the test set and partitions the rest.
pub fn prepare(source: &DatasetSource, sats: &[SatelliteId], clip: (usize, usize), seed: u64) -> Result<PreparedData> {
    let (writers, classes) = match source {
        DatasetSource::Femnist(dir) => (load_leaf_femnist(dir)?, FEMNIST_CLASSES),
        DatasetSource::Synthetic(p) => {
            let k = sats.len();
            // Enough writers that the train split still covers every satellite.
            let n = k + k.div_ceil(9) + 1;
            let mut p = p.clone();
            p.n_per_client.get_or_insert((clip.0.max(1), clip.1.max(clip.0.max(1))));
            (synthetic_noniid(n, &p, seed)?, p.classes)
        }
    };
    let input_dim = writers
        .first()
        .map(|w| w.samples.dim)
        .ok_or_else(|| Error::EmptyDataset("dataset has no writers".into()))?;
    let (train, test) = split_test_writers(writers, 0.1, seed)?;
    let plan = partition_to_satellites(&train, sats, clip, seed)?;
    Ok(PreparedData {
        clients: plan.materialize(&train)?,
        test,
        input_dim,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn writer(id: &str, n: usize) -> WriterDataset {
        let feats = (0..n).map(|i| i as f64).collect();
        WriterDataset {
            writer_id: id.into(),
            samples: LocalDataset::new(feats, 1, vec![0; n]).unwrap(),
        }
    }

    fn sats(k: usize) -> Vec<SatelliteId> {
        (0..k).map(|s| SatelliteId::new(0, s)).collect()
    }

    #[test]
    fn single_satellite_single_writer() {
        let plan = partition_to_satellites(&[writer("a", 300)], &sats(1), (200, 350), 0).unwrap();
        assert_eq!(plan.sample_count(sats(1)[0]), 300);
        assert_eq!(plan.shards[&sats(1)[0]][0].writer_id, "a");
    }

    #[test]
    fn hundred_satellites_clipped() {
        let ws: Vec<_> = (0..260).map(|i| writer(&format!("w{i:03}"), 90 + (i * 37) % 400)).collect();
        let plan = partition_to_satellites(&ws, &sats(100), (200, 350), 3).unwrap();
        for s in sats(100) {
            let n = plan.sample_count(s);
            assert!((200..=350).contains(&n), "{s}: {n}");
        }
        assert_eq!(plan, partition_to_satellites(&ws, &sats(100), (200, 350), 3).unwrap());
    }

    #[test]
    fn shortfall_reported() {
        let err = partition_to_satellites(&[writer("a", 100), writer("b", 50)], &sats(2), (200, 350), 0).unwrap_err();
        match err {
            Error::InsufficientData(m) => assert!(m.contains("250 more samples"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_writer_rejected() {
        assert!(partition_to_satellites(&[writer("a", 300), writer("a", 300)], &sats(1), (200, 350), 0).is_err());
    }

    #[test]
    fn test_split_is_disjoint() {
        let ws: Vec<_> = (0..20).map(|i| writer(&format!("w{i:02}"), 10)).collect();
        let (train, test) = split_test_writers(ws, 0.1, 5).unwrap();
        assert_eq!(train.len(), 18);
        assert_eq!(test.n(), 20);
    }

    #[test]
    fn dataset_source_parsing() {
        assert_eq!(
            "femnist:/data/leaf".parse::<DatasetSource>().unwrap(),
            DatasetSource::Femnist("/data/leaf".into())
        );
        let DatasetSource::Synthetic(p) = "synthetic:skew=0.3,classes=5".parse().unwrap() else {
            panic!()
        };
        assert_eq!((p.skew, p.classes), (0.3, 5));
        assert!("synthetic:bogus=1".parse::<DatasetSource>().is_err());
        assert!("mnist".parse::<DatasetSource>().is_err());
        let round: DatasetSource = DatasetSource::Synthetic(p.clone()).to_string().parse().unwrap();
        assert_eq!(round, DatasetSource::Synthetic(p));
    }

    #[test]
    fn prepare_synthetic_covers_constellation() {
        let s: Vec<_> = (0..2).flat_map(|c| (0..10).map(move |k| SatelliteId::new(c, k))).collect();
        let d = prepare(&DatasetSource::default(), &s, (200, 350), 1).unwrap();
        assert_eq!(d.clients.len(), 20);
        assert!(d.clients.values().all(|c| (200..=350).contains(&c.n())));
        assert!(d.test.n() > 0);
        assert_eq!(d.classes, 10);
    }

    proptest! {
        #[test]
        fn plan_is_disjoint_and_order_free(
            sizes in proptest::collection::vec(1usize..400, 1..40),
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let ws: Vec<_> = sizes.iter().enumerate().map(|(i, n)| writer(&format!("w{i:02}"), *n)).collect();
            let mut reversed = ws.clone();
            reversed.reverse();
            let a = partition_to_satellites(&ws, &sats(k), (20, 350), seed);
            let b = partition_to_satellites(&reversed, &sats(k), (20, 350), seed);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a, &b);
                    let mut seen = BTreeSet::new();
                    for shards in a.shards.values() {
                        for s in shards {
                            prop_assert!(seen.insert(s.writer_id.clone()), "writer {} reused", s.writer_id);
                        }
                    }
                    for s in sats(k) {
                        let n = a.sample_count(s);
                        prop_assert!((20..=350).contains(&n));
                    }
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a.is_ok(), b.is_ok()),
            }
        }
    }
}
