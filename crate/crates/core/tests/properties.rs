use std::collections::BTreeMap;

use modclass::dataset::{read_shard, split, write_shard, FrameSet, SplitSpec};
use modclass::ensemble::{vote, TieBreak};
use modclass::signal::{IqFrame, ModulationMode};
use modclass::tensor::{softmax, Tensor};
use modclass::train::EvalReport;
use proptest::prelude::*;

const MODES: [ModulationMode; 4] = [
    ModulationMode::Bpsk,
    ModulationMode::Qpsk,
    ModulationMode::Gmsk,
    ModulationMode::Fm,
];

fn frame(label: ModulationMode, snr_db: i32, fill: f32) -> IqFrame {
    IqFrame { i_samples: vec![fill; 8], q_samples: vec![-fill; 8], label, snr_db }
}

/// A frame set from (class, snr) keys; frame `i` carries `i` in its samples.
fn frame_set(keys: &[(usize, i32)]) -> FrameSet {
    FrameSet {
        classes: MODES.to_vec(),
        frames: keys.iter().enumerate().map(|(i, &(c, s))| frame(MODES[c], s, i as f32)).collect(),
    }
}

fn keys() -> impl Strategy<Value = Vec<(usize, i32)>> {
    prop::collection::vec((0..MODES.len(), prop::sample::select(vec![-4, 0, 6, 12])), 1..300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_every_cell(keys in keys(), seed in any::<u64>()) {
        let set = frame_set(&keys);
        let spec = SplitSpec::new(seed);
        let s = split(&set, &spec).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..keys.len()).collect::<Vec<_>>());

        let mut per_cell: BTreeMap<(usize, i32), [usize; 3]> = BTreeMap::new();
        for (part, idx) in [&s.train, &s.val, &s.test].into_iter().enumerate() {
            for &i in idx {
                per_cell.entry(keys[i]).or_default()[part] += 1;
            }
        }
        for (cell, counts) in per_cell {
            let n = counts.iter().sum();
            let (tr, va, te) = spec.cell_sizes(n);
            prop_assert_eq!(counts, [tr, va, te], "cell {:?}", cell);
        }
    }

    #[test]
    fn split_depends_only_on_seed_and_labels(keys in keys(), seed in any::<u64>()) {
        let set = frame_set(&keys);
        let spec = SplitSpec::new(seed);
        let a = split(&set, &spec).unwrap();
        prop_assert_eq!(&split(&set, &spec).unwrap(), &a);
        // Sample content plays no part.
        let mut blank = set.clone();
        blank.frames.iter_mut().for_each(|f| f.i_samples.fill(0.0));
        prop_assert_eq!(split(&blank, &spec).unwrap(), a);
    }

    #[test]
    fn shard_round_trip_preserves_frames(
        rows in prop::collection::vec((0..MODES.len(), -20i32..=30, prop::collection::vec(-1e3f32..1e3, 16)), 1..40),
    ) {
        let frames: Vec<IqFrame> = rows
            .iter()
            .map(|(c, s, v)| IqFrame {
                i_samples: v[..8].to_vec(),
                q_samples: v[8..].to_vec(),
                label: MODES[*c],
                snr_db: *s,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.iqs");
        write_shard(&frames, &MODES, &path).unwrap();
        let shard = read_shard(&path).unwrap();
        prop_assert_eq!(&shard.classes, &MODES.to_vec());
        prop_assert_eq!(shard.frames, frames);
    }

    #[test]
    fn unanimous_members_decide(
        k in 2usize..8,
        rows in prop::collection::vec(prop::collection::vec(0.0f32..1.0, 8), 2..6),
        winner in 0usize..8,
    ) {
        let winner = winner % k;
        let probs: Vec<Vec<f32>> = rows
            .iter()
            .map(|r| {
                let mut p = r[..k].to_vec();
                p[winner] = 2.0;
                p
            })
            .collect();
        let refs: Vec<&[f32]> = probs.iter().map(|p| p.as_slice()).collect();
        for tb in [TieBreak::MeanProbability, TieBreak::LowestIndex] {
            prop_assert_eq!(vote(&refs, tb).unwrap(), winner);
        }
    }

    #[test]
    fn vote_ignores_member_order(
        rows in prop::collection::vec(prop::collection::vec(0.0f32..1.0, 5), 2..7),
        rotate in 0usize..7,
    ) {
        let refs: Vec<&[f32]> = rows.iter().map(|p| p.as_slice()).collect();
        let mut shuffled = refs.clone();
        shuffled.rotate_left(rotate % refs.len());
        shuffled.reverse();
        for tb in [TieBreak::MeanProbability, TieBreak::LowestIndex] {
            prop_assert_eq!(vote(&refs, tb).unwrap(), vote(&shuffled, tb).unwrap());
        }
    }

    #[test]
    fn softmax_rows_are_distributions(
        b in 1usize..6,
        k in 1usize..30,
        scale in 0.1f32..80.0,
        seed in any::<u64>(),
    ) {
        let mut state = seed | 1;
        let logits = Tensor::<f32>::from_fn([b, 1, k], |_, _, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state % 2001) as f32 / 1000.0 - 1.0) * scale
        });
        let p = softmax(&logits).unwrap();
        for n in 0..b {
            let row = p.sample(n);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let total: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((total - 1.0).abs() < 1e-6, "row sums to {}", total);
        }
    }

    #[test]
    fn overall_accuracy_is_frame_weighted_mean_of_snr_bins(
        rows in prop::collection::vec((0usize..3, 0usize..3, prop::sample::select(vec![-2, 4, 10])), 1..200),
    ) {
        let truth: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let predicted: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let snr: Vec<i32> = rows.iter().map(|r| r.2).collect();
        let classes = vec!["a".to_string(), "b".into(), "c".into()];
        let report = EvalReport::from_predictions(classes, &truth, &predicted, &snr, None).unwrap();
        let weighted: f64 = report
            .per_snr
            .values()
            .map(|t| t.accuracy() * t.total as f64)
            .sum::<f64>()
            / rows.len() as f64;
        prop_assert!((weighted - report.overall_accuracy()).abs() < 1e-12);
        let diag: u64 = (0..3).map(|c| report.confusion[c][c]).sum();
        prop_assert_eq!(diag, report.overall().correct);
        let total: u64 = report.confusion.iter().flatten().sum();
        prop_assert_eq!(total, rows.len() as u64);
    }
}
