use nutripred::dataio::{
    load_image, parse_manifest, render_manifest, split_dataset, DatasetManifest, ImageSet, NutrientVector, Sample,
    Split, SplitFractions, Subset,
};
use nutripred::Error;
use proptest::prelude::*;

fn sample_strategy() -> impl Strategy<Value = Sample> {
    (
        "[a-z][a-z0-9_/]{0,12}\\.(png|jpg)",
        proptest::array::uniform5(0.0f64..1e6),
    )
        .prop_map(|(path, v)| Sample { image_ref: path, label: NutrientVector::new(v).unwrap() })
}

fn unique(samples: Vec<Sample>) -> Vec<Sample> {
    let mut seen = std::collections::HashSet::new();
    samples.into_iter().filter(|s| seen.insert(s.image_ref.clone())).collect()
}

proptest! {
    #[test]
    fn manifest_render_parse_round_trip(samples in proptest::collection::vec(sample_strategy(), 0..40)) {
        let m = DatasetManifest::new(unique(samples));
        let back = parse_manifest(&render_manifest(&m)).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn split_is_a_partition(n in 0usize..200, seed in any::<u64>(), a in 0u32..=10, b in 0u32..=10) {
        prop_assume!(a + b <= 10);
        let f = SplitFractions::new(a as f64 / 10.0, b as f64 / 10.0, (10 - a - b) as f64 / 10.0).unwrap();
        let m = DatasetManifest::new(
            (0..n).map(|i| Sample { image_ref: format!("{i}.png"), label: NutrientVector::new([1.0; 5]).unwrap() }).collect(),
        );
        let s = split_dataset(&m, f, seed).unwrap();
        let mut all: Vec<usize> = [Split::Train, Split::Val, Split::Test]
            .iter()
            .flat_map(|&sp| s.indices(Subset::Split(sp)).unwrap())
            .collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes = f.sizes(n);
        prop_assert_eq!(s.indices(Subset::Split(Split::Train)).unwrap().len(), sizes[0]);
    }
}

#[test]
fn missing_image_surfaces_when_loaded() {
    let dir = tempfile::tempdir().unwrap();
    let text = "image_path,calories_kcal,mass_g,protein_g,fat_g,carb_g\nnope.png,1,1,1,1,1\n";
    std::fs::write(dir.path().join("m.csv"), text).unwrap();
    let m = nutripred::dataio::load_manifest(dir.path().join("m.csv")).unwrap();
    let set = ImageSet::new(m, 8).unwrap();
    assert!(matches!(set.image(0), Err(Error::Decode { .. })));
    assert!(matches!(load_image(dir.path().join("nope.png"), 8), Err(Error::Decode { .. })));
}

#[test]
fn corrupt_image_is_a_decode_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.png");
    std::fs::write(&p, b"\x89PNG\r\n\x1a\nthis is not a png").unwrap();
    assert!(matches!(load_image(&p, 8), Err(Error::Decode { .. })));
}

#[test]
fn batches_stack_in_requested_order() {
    let dir = tempfile::tempdir().unwrap();
    let spec = nutripred::synthdata::SynthSpec { count: 5, resolution: 8, ..Default::default() };
    let m = nutripred::synthdata::generate(&spec, dir.path()).unwrap();
    let set = ImageSet::new(m, 8).unwrap();
    let b = set.batch(&[3, 1]).unwrap();
    assert_eq!(b.images.dims(), &[2, 3, 8, 8]);
    assert_eq!(b.indices, vec![3, 1]);
    assert_eq!(b.targets[0], set.manifest().samples[3].label.to_array());
    let first: Vec<f32> = b.images.get(0).unwrap().flatten_all().unwrap().to_vec1().unwrap();
    assert_eq!(first, set.image(3).unwrap().pixels);
}
