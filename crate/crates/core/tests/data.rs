use std::fs;

use proptest::prelude::*;

use pix2pix_mt::data::augment::{translate, FILL};
use pix2pix_mt::data::folds::split_subjects;
use pix2pix_mt::data::manifest::{write_dataset, MASKS_DIR, SUBJECTS_FILE};
use pix2pix_mt::data::{
    augment_dataset, load_all, load_manifest, load_sample, subject_kfold, Image, Origin,
    Transform,
};
use pix2pix_mt::harness::toy_samples;
use pix2pix_mt::Error;

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let samples = toy_samples(4, 64, 3).unwrap();
    let index = write_dataset(dir.path(), &samples).unwrap();
    assert_eq!(index.len(), 4);
    assert_eq!(index.subjects().len(), 4);
    let loaded = load_all(&index, 64).unwrap();
    assert_eq!(loaded, samples);
    for s in &loaded {
        s.validate().unwrap();
    }
}

#[test]
fn resize_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let index = write_dataset(dir.path(), &toy_samples(4, 128, 0).unwrap()).unwrap();
    let s = load_sample(&index, "toy000", 64).unwrap();
    assert_eq!(s.size(), (64, 64));
    s.validate().unwrap();
    assert!(load_sample(&index, "toy000", 63).is_err());
    assert!(load_sample(&index, "nope", 64).is_err());
}

#[test]
fn missing_mask_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &toy_samples(4, 64, 0).unwrap()).unwrap();
    fs::remove_file(dir.path().join(MASKS_DIR).join("toy002.png")).unwrap();
    match load_manifest(dir.path()) {
        Err(Error::MissingPair { id, .. }) => assert_eq!(id, "toy002"),
        other => panic!("expected MissingPair, got {other:?}"),
    }
}

#[test]
fn missing_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_manifest(dir.path()), Err(Error::Config(_))));
}

#[test]
fn corrupt_png_is_a_decode_error() {
    let dir = tempfile::tempdir().unwrap();
    let index = write_dataset(dir.path(), &toy_samples(4, 64, 0).unwrap()).unwrap();
    fs::write(&index.get("toy001").unwrap().image, b"not a png").unwrap();
    assert!(matches!(
        load_sample(&index, "toy001", 64),
        Err(Error::Decode { .. })
    ));
}

#[test]
fn subjects_file_groups_images() {
    let dir = tempfile::tempdir().unwrap();
    let index = write_dataset(dir.path(), &toy_samples(6, 64, 0).unwrap()).unwrap();
    let rows = "id,subject\ntoy000,a\ntoy001,a\ntoy002,b\ntoy003,b\ntoy004,c\ntoy005,c\n";
    fs::write(dir.path().join(SUBJECTS_FILE), rows).unwrap();
    let index2 = load_manifest(dir.path()).unwrap();
    assert_eq!(index2.subjects(), vec!["a", "b", "c"]);
    assert_eq!(index.len(), index2.len());

    let split = subject_kfold(&index2, 3, 9).unwrap();
    assert_eq!(split.fold_sizes(), vec![1, 1, 1]);
    assert!(subject_kfold(&index2, 4, 9).is_err());
    assert!(subject_kfold(&index2, 1, 9).is_err());
}

#[test]
fn folds_are_seeded() {
    let subjects: Vec<String> = (0..20).map(|i| format!("s{i:02}")).collect();
    let a = split_subjects(subjects.clone(), 5, 1).unwrap();
    let b = split_subjects(subjects.iter().rev().cloned().collect(), 5, 1).unwrap();
    let c = split_subjects(subjects, 5, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert_ne!(a.assignments, c.assignments);
}

#[test]
fn augmentation_expands_five_fold() {
    let originals = toy_samples(4, 64, 0).unwrap();
    let aug = augment_dataset(&originals).unwrap();
    assert_eq!(aug.len(), 20);
    for chunk in aug.chunks(5) {
        assert!(chunk[0].is_original());
        let subject = &chunk[0].subject;
        for (s, t) in chunk.iter().zip(Transform::ALL) {
            assert_eq!(&s.subject, subject);
            if t != Transform::Identity {
                assert_eq!(s.origin, Origin::Augmented(t));
                assert_eq!(s.id, format!("{}__{}", chunk[0].id, t));
            }
            s.validate().unwrap();
        }
    }
    assert!(augment_dataset(&aug).is_err());
}

#[test]
fn augmentation_is_aligned_across_images() {
    // Every image of a sample goes through the same geometry, so the mask
    // still marks the same (shifted) pixels of the input.
    let original = &toy_samples(4, 64, 5).unwrap()[0];
    let aug = augment_dataset(std::slice::from_ref(original)).unwrap();
    let shifted = aug
        .iter()
        .find(|s| s.origin == Origin::Augmented(Transform::Shift30x10))
        .unwrap();
    for y in 10..64 {
        for x in 30..64 {
            assert_eq!(shifted.x.get(0, y, x), original.x.get(0, y - 10, x - 30));
            assert_eq!(shifted.y1.get(2, y, x), original.y1.get(2, y - 10, x - 30));
        }
    }
}

proptest! {
    #[test]
    fn shift_then_unshift_restores_interior(dx in -12i64..12, dy in -12i64..12, seed in 0u64..1000) {
        let mut img = Image::filled(24, 24, 0.0);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (((i as u64 * 2654435761 + seed) % 1000) as f32) / 500.0 - 1.0;
        }
        let back = translate(&translate(&img, dx, dy), -dx, -dy);
        for y in 0..24usize {
            for x in 0..24usize {
                let inside = (0..24).contains(&(x as i64 + dx)) && (0..24).contains(&(y as i64 + dy));
                if inside {
                    prop_assert_eq!(back.get(1, y, x), img.get(1, y, x));
                } else {
                    prop_assert_eq!(back.get(1, y, x), FILL);
                }
            }
        }
    }
}
