mod common;

use std::fs;
use std::path::Path;

use mcaf_core::classical::{
    classify_haze, haze_density, scene, split_counts, synthesize_haze, HazeClass, Transmission,
};
use mcaf_core::data::geo::pixel_window;
use mcaf_core::data::*;
use mcaf_core::{Error, SeededRng};
use proptest::prelude::*;

fn random_rgb8(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = SeededRng::new(seed);
    Image::from_fn(w, h, |_, _, _| rng.below(256) as f32 / 255.0)
}

#[test]
fn png_and_ppm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = random_rgb8(13, 7, 1);
    for name in ["a.png", "a.ppm"] {
        let p = dir.path().join(name);
        img.save(&p).unwrap();
        let back = Image::load(&p).unwrap();
        assert_eq!(back.to_rgb8().into_raw(), img.to_rgb8().into_raw());
        back.save(&dir.path().join(format!("b{name}"))).unwrap();
        assert_eq!(
            fs::read(&p).unwrap(),
            fs::read(dir.path().join(format!("b{name}"))).unwrap()
        );
    }
}

#[test]
fn ppm_header_parsed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.ppm");
    let mut bytes = b"P6\n16 16\n255\n".to_vec();
    bytes.extend((0..16 * 16 * 3).map(|i| (i % 251) as u8));
    fs::write(&p, bytes).unwrap();
    let img = Image::load(&p).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));
    assert_eq!(img.get(0, 0, 1), 3.0 / 255.0);
}

#[test]
fn bad_files_are_typed_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.png");
    fs::write(&p, b"NOPE not an image").unwrap();
    assert!(matches!(Image::load(&p), Err(Error::Image { .. })));
    let img = random_rgb8(8, 8, 2);
    let good = dir.path().join("good.png");
    img.save(&good).unwrap();
    let bytes = fs::read(&good).unwrap();
    fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(Image::load(&p), Err(Error::Image { .. })));
    assert!(matches!(
        Image::load(&dir.path().join("missing.png")),
        Err(Error::Io { .. })
    ));
}

fn meta() -> GeoMeta {
    GeoMeta::new([100.0, 31.0], [101.0, 30.0]).unwrap()
}

#[test]
fn geo_crop_full_extent_is_identity() {
    let img = random_rgb8(40, 30, 3);
    let out = geo_crop(&img, &meta(), &meta()).unwrap();
    assert_eq!(out.data(), img.data());
    assert_eq!(out.geo, Some(meta()));
}

#[test]
fn geo_crop_linear_map() {
    let img = Image::filled(1000, 10, [0.5; 3]);
    let region = GeoMeta::new([100.25, 31.0], [100.75, 30.0]).unwrap();
    assert_eq!(
        pixel_window(1000, 10, &meta(), &region).unwrap(),
        (0, 250, 10, 500)
    );
    let out = geo_crop(&img, &meta(), &region).unwrap();
    assert_eq!(out.width(), 500);
    let g = out.geo.unwrap();
    assert!((g.tl[0] - 100.25).abs() < 1e-12 && (g.br[0] - 100.75).abs() < 1e-12);
}

#[test]
fn geo_crop_errors() {
    let img = Image::filled(100, 100, [0.5; 3]);
    let zero = GeoMeta {
        tl: [100.5, 30.5],
        br: [100.5, 30.4],
    };
    assert!(matches!(
        geo_crop(&img, &meta(), &zero),
        Err(Error::Range(_))
    ));
    let outside = GeoMeta::new([99.0, 31.0], [100.5, 30.0]).unwrap();
    assert!(matches!(
        geo_crop(&img, &meta(), &outside),
        Err(Error::Range(_))
    ));
    assert!(GeoMeta::new([101.0, 30.0], [100.0, 31.0]).is_err());
}

#[test]
fn geo_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.json");
    fs::write(&p, r#"{"tl": [100.0, 31.0], "br": [101.0, 30.0]}"#).unwrap();
    assert_eq!(GeoMeta::load(&p).unwrap(), meta());
    fs::write(&p, r#"{"tl": [100.0]}"#).unwrap();
    assert!(matches!(GeoMeta::load(&p), Err(Error::Format { .. })));
}

#[test]
fn tiling_cases() {
    let img = random_rgb8(512, 512, 4);
    let tiles = tile_image(&img, 256).unwrap();
    let origins: Vec<_> = tiles.iter().map(|t| t.1).collect();
    assert_eq!(origins, [(0, 0), (0, 256), (256, 0), (256, 256)]);
    assert_eq!(untile(&tiles, 512, 512).unwrap().data(), img.data());
    assert_eq!(tile_image(&random_rgb8(300, 300, 5), 256).unwrap().len(), 1);
    assert!(tile_image(&img, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tile_count(w in 1usize..90, h in 1usize..90, tile in 1usize..40) {
        let img = Image::filled(w, h, [0.1; 3]);
        let tiles = tile_image(&img, tile).unwrap();
        prop_assert_eq!(tiles.len(), (h / tile) * (w / tile));
        prop_assert!(tiles.iter().all(|(t, (r, c))| r % tile == 0 && c % tile == 0 && t.width() == tile));
    }

    #[test]
    fn geo_crop_composes(f in proptest::array::uniform8(0.0f64..1.0)) {
        let img = random_rgb8(64, 48, 6);
        let m = meta();
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let (x0, x1) = (f[0].min(f[1]) * 0.5, 0.5 + f[0].max(f[1]) * 0.5);
        let (y0, y1) = (f[2].min(f[3]) * 0.5, 0.5 + f[2].max(f[3]) * 0.5);
        let outer = GeoMeta::new(
            [lerp(m.tl[0], m.br[0], x0), lerp(m.tl[1], m.br[1], y0)],
            [lerp(m.tl[0], m.br[0], x1), lerp(m.tl[1], m.br[1], y1)],
        ).unwrap();
        let first = geo_crop(&img, &m, &outer).unwrap();
        let g = first.geo.unwrap();
        let (u0, u1) = (f[4].min(f[5]) * 0.45, 0.55 + f[4].max(f[5]) * 0.45);
        let (v0, v1) = (f[6].min(f[7]) * 0.45, 0.55 + f[6].max(f[7]) * 0.45);
        let inner = GeoMeta::new(
            [lerp(g.tl[0], g.br[0], u0), lerp(g.tl[1], g.br[1], v0)],
            [lerp(g.tl[0], g.br[0], u1), lerp(g.tl[1], g.br[1], v1)],
        ).unwrap();
        let twice = geo_crop(&first, &g, &inner);
        let once = geo_crop(&img, &m, &inner);
        match (twice, once) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.data(), b.data());
                let (ga, gb) = (a.geo.unwrap(), b.geo.unwrap());
                for (u, v) in ga.tl.iter().chain(&ga.br).zip(gb.tl.iter().chain(&gb.br)) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a.map(|i| i.width()), b.map(|i| i.width())),
        }
    }
}

/// Writes pairs whose haze spans all three classes: transmission 0.9 is
/// thin, 0.5 moderate and 0.2 thick under the default thresholds.
fn write_pairs(root: &Path, n: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let (hz, cl) = (root.join("hazy"), root.join("clear"));
    fs::create_dir_all(&hz).unwrap();
    fs::create_dir_all(&cl).unwrap();
    let ts = [0.9, 0.5, 0.2];
    for i in 0..n {
        let j = scene(100 + i as u64, 48, 48);
        let h = synthesize_haze(&j, &Transmission::Uniform(ts[i % 3]), [0.9; 3]).unwrap();
        h.save(&hz.join(format!("p{i:02}.png"))).unwrap();
        j.save(&cl.join(format!("p{i:02}.png"))).unwrap();
    }
    (hz, cl)
}

#[test]
fn empty_dirs_give_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let m = build_manifest(&a, &b, &ManifestConfig::default()).unwrap();
    assert!(m.records.is_empty() && m.exceptions.is_empty());
    assert_eq!(m.to_jsonl(), "");
    assert!(build_manifest(&dir.path().join("nope"), &b, &ManifestConfig::default()).is_err());
}

#[test]
fn manifest_classes_match_direct_classification() {
    let dir = tempfile::tempdir().unwrap();
    let (hz, cl) = write_pairs(dir.path(), 10);
    fs::write(hz.join("orphan.png"), fs::read(hz.join("p00.png")).unwrap()).unwrap();
    fs::write(hz.join("notes.txt"), "ignored").unwrap();
    let cfg = ManifestConfig::default();
    let m = build_manifest(&hz, &cl, &cfg).unwrap();
    assert_eq!(m.records.len(), 10);
    assert_eq!(m.exceptions.len(), 1);
    assert!(m.exceptions[0].file.ends_with("orphan.png"));
    let mut seen = std::collections::BTreeSet::new();
    for r in &m.records {
        let img = Image::load(Path::new(&r.hazy)).unwrap();
        let d = haze_density(&img, cfg.radius);
        assert!((r.mdc - d).abs() < 1e-12);
        assert_eq!(r.class, classify_haze(d, cfg.thresholds));
        seen.insert(r.class);
    }
    assert_eq!(seen.len(), 3);
    for class in HazeClass::ALL {
        let n = m.records.iter().filter(|r| r.class == class).count();
        let count = |s: &str| m.counts().get(&(class, s)).copied().unwrap_or(0);
        assert_eq!(
            (count("train"), count("test"), count("val")),
            split_counts(n)
        );
    }
}

#[test]
fn manifest_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (hz, cl) = write_pairs(dir.path(), 9);
    let cfg = ManifestConfig {
        seed: 17,
        ..ManifestConfig::default()
    };
    let a = build_manifest(&hz, &cl, &cfg).unwrap().to_jsonl();
    let b = build_manifest(&hz, &cl, &cfg).unwrap().to_jsonl();
    assert_eq!(a, b);
    for line in a.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["class", "clear", "col", "hazy", "mdc", "row", "split"]
        );
    }
    let p = dir.path().join("m.jsonl");
    fs::write(&p, &a).unwrap();
    let back = Manifest {
        records: Manifest::load(&p).unwrap(),
        exceptions: vec![],
    };
    assert_eq!(back.to_jsonl(), a);
    assert!(Manifest::from_jsonl("{\"hazy\": 1}\n").is_err());
}

#[test]
fn manifest_tiles_carry_origins() {
    let dir = tempfile::tempdir().unwrap();
    let (hz, cl) = write_pairs(dir.path(), 3);
    let cfg = ManifestConfig {
        tile: Some(16),
        ..ManifestConfig::default()
    };
    let m = build_manifest(&hz, &cl, &cfg).unwrap();
    assert_eq!(m.records.len(), 3 * 9);
    let origins: Vec<_> = m.records[..9].iter().map(|r| (r.row, r.col)).collect();
    assert_eq!(origins[..4], [(0, 0), (0, 16), (0, 32), (16, 0)]);
}

#[test]
fn band_selection_permutes_channels() {
    let img = Image::from_fn(3, 2, |c, y, x| (c * 100 + y * 10 + x) as f32);
    let swapped = img.select_bands([2, 1, 0]).unwrap();
    assert_eq!(swapped.plane(0), img.plane(2));
    assert_eq!(swapped.plane(2), img.plane(0));
    assert_eq!(img.select_bands([0, 1, 2]).unwrap(), img);
    let grey = img.select_bands([1, 1, 1]).unwrap();
    assert!((0..3).all(|c| grey.plane(c) == img.plane(1)));
    assert!(matches!(
        img.select_bands([0, 1, 3]),
        Err(mcaf_core::Error::Range(_))
    ));

    let dir = tempfile::tempdir().unwrap();
    let (hz, cl) = write_pairs(dir.path(), 3);
    let cfg = ManifestConfig {
        bands: [2, 2, 2],
        ..ManifestConfig::default()
    };
    assert_eq!(build_manifest(&hz, &cl, &cfg).unwrap().records.len(), 3);
    let bad = ManifestConfig {
        bands: [0, 1, 5],
        ..ManifestConfig::default()
    };
    let m = build_manifest(&hz, &cl, &bad).unwrap();
    assert!(m.records.is_empty());
    assert_eq!(m.exceptions.len(), 3);
}
