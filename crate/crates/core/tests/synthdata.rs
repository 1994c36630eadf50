use nutripred::dataio::{load_manifest, parse_manifest};
use nutripred::synthdata::{generate, LabelMap, SynthSpec, MANIFEST_FILE, SPEC_FILE};

fn means_of(path: &std::path::Path) -> [f64; 3] {
    let img = image::open(path).unwrap().to_rgb8();
    let mut sums = [0f64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            sums[c] += p[c] as f64;
        }
    }
    let n = (img.width() * img.height()) as f64;
    sums.map(|s| s / n / 255.0)
}

#[test]
fn labels_follow_from_the_written_images() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { count: 12, resolution: 24, seed: 3, ..SynthSpec::default() };
    generate(&spec, dir.path()).unwrap();
    let manifest = load_manifest(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.len(), 12);
    let map = LabelMap::default();
    for s in &manifest.samples {
        let m = means_of(&manifest.resolve(s));
        let label = s.label.to_array();
        for (k, value) in label.iter().enumerate() {
            let expected = map.intercept[k] + (0..3).map(|c| map.slopes[k][c] * m[c]).sum::<f64>();
            assert!((value - expected).abs() <= 1e-6, "{} task {k}", s.image_ref);
            assert!(*value >= 0.0);
        }
    }
    let written: SynthSpec =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(SPEC_FILE)).unwrap()).unwrap();
    assert_eq!(written, spec);
}

#[test]
fn regeneration_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = SynthSpec { count: 6, resolution: 16, seed: 9, ..SynthSpec::default() };
    generate(&spec, a.path()).unwrap();
    generate(&spec, b.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 6 + 2);
    for name in names {
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }

    let c = tempfile::tempdir().unwrap();
    generate(&SynthSpec { seed: 10, ..spec }, c.path()).unwrap();
    assert_ne!(
        std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(c.path().join(MANIFEST_FILE)).unwrap()
    );
}

#[test]
fn default_set_is_small_and_parses() {
    let spec = SynthSpec::default();
    assert_eq!((spec.count, spec.resolution), (64, 64));
    let dir = tempfile::tempdir().unwrap();
    generate(&spec, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(parse_manifest(&text).unwrap().len(), 64);
}

#[test]
fn invalid_specs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate(&SynthSpec { count: 0, ..SynthSpec::default() }, dir.path()).is_err());
    assert!(generate(&SynthSpec { resolution: 0, ..SynthSpec::default() }, dir.path()).is_err());
}
