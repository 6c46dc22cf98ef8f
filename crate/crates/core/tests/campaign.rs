use rheocast::datapipe::{count_input_sets, AssembleConfig, Combination, Dataset};
use rheocast::synthgen::{directory_digest, generate_campaign, CampaignSpec, Truth};

fn tiny(seed: u64) -> CampaignSpec {
    CampaignSpec {
        n_concretes: 6,
        runs_per_concrete: 2,
        frames_per_run: 26,
        implausible: vec![1],
        seed,
        ..CampaignSpec::desk()
    }
}

#[test]
fn generation_is_reproducible() {
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = generate_campaign(&tiny(3), a.path(), false).unwrap();
    let rb = generate_campaign(&tiny(3), b.path(), false).unwrap();
    let rc = generate_campaign(&tiny(4), c.path(), false).unwrap();
    assert_eq!(ra.digest, rb.digest);
    assert_eq!(ra.digest, directory_digest(a.path()).unwrap());
    assert_ne!(ra.digest, rc.digest);
}

#[test]
fn existing_campaigns_need_force() {
    let dir = tempfile::tempdir().unwrap();
    generate_campaign(&tiny(1), dir.path(), false).unwrap();
    assert!(generate_campaign(&tiny(1), dir.path(), false).is_err());
    generate_campaign(&tiny(2), dir.path(), true).unwrap();
}

#[test]
fn dataset_reads_back_what_was_written() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny(5);
    let report = generate_campaign(&spec, dir.path(), false).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    assert_eq!((ds.height, ds.width), (spec.height, spec.width));
    assert_eq!(ds.concretes.len(), spec.n_concretes);
    let truth = Truth::load(dir.path()).unwrap();
    assert!(truth.get(1).unwrap().implausible);

    let cfg = AssembleConfig::new(ds.paddle_threshold_mm, Combination::full());
    let mut frames = 0;
    for c in &ds.concretes {
        assert_eq!(c.references.len(), 6);
        assert_eq!(c.runs.len(), spec.runs_per_concrete);
        for r in &c.runs {
            frames += r.frame_indices.len();
            let sets = ds.run_input_sets(c, r, &cfg).unwrap();
            assert_eq!(sets.len(), count_input_sets(&r.frame_indices, cfg.skip_head));
            for s in &sets {
                assert_eq!((s.height, s.width), (ds.height, ds.width));
                assert_eq!(s.channels, 4);
                assert!(s.image.iter().all(|v| v.is_finite()));
                // Implausible rheometer values never become targets.
                if c.id == 1 {
                    assert!(!s.target_mask[1] && !s.target_mask[2]);
                }
            }
        }
    }
    assert_eq!(frames, report.frames_written);
}
