mod common;

use std::collections::HashSet;
use std::sync::Arc;

use common::*;
use meshstyle::dataset::{make_manifest, BodyModel, Resolution, NUM_JOINTS, NUM_SHAPE_PARAMS};
use meshstyle::losses::loss_dist;
use meshstyle::{Dataset, DatasetConfig, Mesh, Split};

#[test]
fn sampling_covers_every_training_cell() {
    let data = desk_dataset();
    let train: HashSet<(usize, usize)> = data.manifest().cells(Split::Train).into_iter().collect();
    let mut seen = HashSet::new();
    let mut r = rng(51);
    for _ in 0..10_000 {
        let p = data.sample_pair(&mut r).unwrap();
        for cell in [p.posed, p.identity, p.ground_truth] {
            assert!(train.contains(&cell), "{cell:?} is not a training cell");
        }
        assert_eq!(p.ground_truth, (p.identity.0, p.posed.1));
        assert_ne!(p.identity.1, p.posed.1);
        seen.insert(p.posed);
        seen.insert(p.ground_truth);
    }
    assert_eq!(seen, train);
}

#[test]
fn self_pairs_have_the_posed_body_as_ground_truth() {
    let data = desk_dataset();
    let mut r = rng(52);
    let mut found = 0;
    for _ in 0..2000 {
        let p = data.sample_pair(&mut r).unwrap();
        if p.identity.0 == p.posed.0 {
            assert_eq!(p.ground_truth, p.posed);
            assert_eq!(data.mesh(p.ground_truth).vertices(), data.mesh(p.posed).vertices());
            found += 1;
        }
    }
    assert!(found > 0);
}

#[test]
fn distinct_poses_have_distinct_distance_matrices() {
    let model = BodyModel::new(Resolution::Standard);
    let shape = [1.0; NUM_SHAPE_PARAMS];
    let rest = [0.0; NUM_JOINTS];
    let a: Mesh<f64> = model.generate(&shape, &rest).unwrap();
    for joint in 0..NUM_JOINTS {
        let mut pose = rest;
        pose[joint] = 0.06;
        let b = model.generate(&shape, &pose).unwrap();
        let d = loss_dist(a.to_columns().view(), b.to_columns().view()).unwrap();
        assert!(d > 0.0, "joint {joint}");
    }
}

#[test]
fn every_body_shares_the_template() {
    let data = desk_dataset();
    for s in 0..data.num_shapes() {
        for p in 0..data.num_poses() {
            let m = data.mesh((s, p));
            assert!(Arc::ptr_eq(m.template(), data.template()));
            assert_eq!(m.num_vertices(), data.template().num_vertices());
        }
    }
}

#[test]
fn saved_grid_matches_regeneration() {
    let config = DatasetConfig { num_shapes: 5, seed: 3, split_fraction: 0.3, ..DatasetConfig::default() };
    let data: Dataset<f64> = Dataset::generate(make_manifest(config.clone()).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.save(dir.path()).unwrap();
    let loaded: Dataset<f64> = Dataset::load(dir.path()).unwrap();
    let again: Dataset<f64> = Dataset::generate(make_manifest(config).unwrap()).unwrap();
    assert_eq!(loaded.manifest(), again.manifest());
    for s in 0..5 {
        for p in 0..6 {
            for (u, v) in loaded.mesh((s, p)).vertices().iter().zip(again.mesh((s, p)).vertices()) {
                for k in 0..3 {
                    assert!((u[k] - v[k]).abs() < 1e-9);
                }
            }
        }
    }
    assert_eq!(loaded.manifest().held_out_shapes().len(), 1);
    assert_eq!(loaded.manifest().cells(Split::Validation).len(), 9);
}

#[test]
fn grids_differ_by_seed() {
    let a = make_manifest(DatasetConfig::default()).unwrap();
    let b = make_manifest(DatasetConfig { seed: 8, ..DatasetConfig::default() }).unwrap();
    assert_ne!(a.bodies[0].shape_params, b.bodies[0].shape_params);
    assert_eq!(a.template_id, b.template_id);
}
