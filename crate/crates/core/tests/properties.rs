use proptest::prelude::*;
use sartriage::detect::{boxes_connect, merge_overlapping, tile_grid, weighted_box_fusion, Detection};
use sartriage::geometry::BoundingBox;
use sartriage::ingest::{CorpusManifest, GpsCoord, ImageRecord, SourceKind};
use sartriage::raster::RgbF32;
use sartriage::trainprep::{denormalize, normalize, split_train_val, NORMALIZE_MEANS, NORMALIZE_STDS};

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (0u32..200, 0u32..200, 1u32..40, 1u32..40)
        .prop_map(|(x, y, w, h)| BoundingBox::image(x as f64, y as f64, w as f64, h as f64))
}

fn arb_dets(max: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((arb_box(), 0.0f64..=1.0), 0..max)
        .prop_map(|v| v.into_iter().map(|(b, s)| Detection::new(b, s)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tiles_cover_the_image_and_stay_inside(w in 1u32..3000, h in 1u32..3000, tile in 16u32..600, frac in 0.0f64..0.9) {
        let overlap = ((tile as f64) * frac) as u32;
        let tiles = tile_grid(w, h, tile, overlap);
        for t in &tiles {
            prop_assert!(w <= tile || t.x + t.size <= w);
            prop_assert!(h <= tile || t.y + t.size <= h);
        }
        let mut xs: Vec<u32> = tiles.iter().map(|t| t.x).collect();
        xs.sort_unstable();
        xs.dedup();
        let mut ys: Vec<u32> = tiles.iter().map(|t| t.y).collect();
        ys.sort_unstable();
        ys.dedup();
        prop_assert_eq!(tiles.len(), xs.len() * ys.len());
        for axis in [(&xs, w), (&ys, h)] {
            let (offs, extent) = axis;
            prop_assert_eq!(offs[0], 0);
            prop_assert!(offs[offs.len() - 1] + tile >= extent);
            for pair in offs.windows(2) {
                // consecutive tiles overlap by at least `overlap`
                prop_assert!(pair[1] - pair[0] <= tile - overlap);
            }
        }
        prop_assert!(tiles.iter().enumerate().all(|(i, t)| t.index == i));
    }

    #[test]
    fn merge_is_idempotent_and_encloses_inputs(dets in arb_dets(40)) {
        let merged = merge_overlapping(&dets);
        prop_assert_eq!(merge_overlapping(&merged), merged.clone());
        for (i, a) in merged.iter().enumerate() {
            for b in &merged[i + 1..] {
                prop_assert!(!boxes_connect(&a.bbox, &b.bbox));
            }
        }
        for d in &dets {
            let owner = merged.iter().find(|m| m.bbox.contains(&d.bbox));
            prop_assert!(owner.is_some());
            prop_assert!(owner.unwrap().score >= d.score);
        }
        for m in &merged {
            // every output is the hull of the inputs it contains, scored by their max
            let inside: Vec<&Detection> = dets.iter().filter(|d| m.bbox.contains(&d.bbox)).collect();
            let hull = inside.iter().skip(1).fold(inside[0].bbox, |acc, d| acc.union_hull(&d.bbox));
            prop_assert_eq!(hull.to_xywh(), m.bbox.to_xywh());
            prop_assert_eq!(inside.iter().map(|d| d.score).fold(0.0, f64::max), m.score);
        }
        prop_assert_eq!(merged.iter().map(|m| m.contributors).sum::<usize>(), dets.len());
    }

    #[test]
    fn fusion_preserves_mass_and_bounds(dets in arb_dets(30), thr in 0.05f64..0.95) {
        let fused = weighted_box_fusion(&dets, thr);
        prop_assert!(fused.len() <= dets.len());
        prop_assert_eq!(fused.iter().map(|d| d.contributors).sum::<usize>(), dets.len());
        if let Some(first) = dets.first() {
            let hull = dets.iter().fold(first.bbox, |acc, d| acc.union_hull(&d.bbox));
            let max = dets.iter().map(|d| d.score).fold(0.0, f64::max);
            for f in &fused {
                let eps = 1e-9;
                prop_assert!(f.bbox.x >= hull.x - eps && f.bbox.y >= hull.y - eps);
                prop_assert!(f.bbox.x1() <= hull.x1() + eps && f.bbox.y1() <= hull.y1() + eps);
                prop_assert!(f.score <= max + 1e-12);
            }
        }
        // nothing fuses above a perfect match
        prop_assert_eq!(weighted_box_fusion(&dets, 1.0 + 1e-9).len(), dets.len());
    }

    #[test]
    fn fusing_a_box_with_itself_is_that_box(b in arb_box(), s in 0.01f64..1.0, copies in 1usize..5) {
        let dets = vec![Detection::new(b, s); copies];
        let fused = weighted_box_fusion(&dets, 0.5);
        prop_assert_eq!(fused.len(), 1);
        prop_assert!((fused[0].score - s).abs() < 1e-12);
        for (got, want) in fused[0].bbox.to_xywh().iter().zip(b.to_xywh()) {
            prop_assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn gps_survives_the_manifest(lat in -90.0f64..=90.0, lon in -180.0f64..=180.0) {
        let mut m = CorpusManifest::empty("/data");
        m.records.push(ImageRecord {
            id: "x.jpg".into(),
            source_path: "x.jpg".into(),
            source_kind: SourceKind::Photo,
            parent_video: None,
            frame_time_s: None,
            width_px: 1,
            height_px: 1,
            gps: Some(GpsCoord { lat, lon }),
            captured_at: None,
        });
        let back: CorpusManifest = serde_json::from_str(&m.to_json()).unwrap();
        prop_assert_eq!(back.records[0].gps, Some(GpsCoord { lat, lon }));
    }

    #[test]
    fn split_partitions_the_ids(n in 2usize..300, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("id{i}")).collect();
        let s = split_train_val(&ids, frac, seed).unwrap();
        prop_assert_eq!(s.val.len(), (frac * n as f64).round() as usize);
        let mut all: Vec<String> = s.train.iter().chain(&s.val).cloned().collect();
        all.sort();
        let mut want = ids.clone();
        want.sort();
        prop_assert_eq!(all, want);
    }

    #[test]
    fn normalization_round_trips(values in prop::collection::vec(0.0f32..=1.0, 12)) {
        let mut img = RgbF32::new(2, 2);
        img.as_mut_slice().copy_from_slice(&values);
        let n = normalize(&img, NORMALIZE_MEANS, NORMALIZE_STDS);
        let back = denormalize(&n, 2, 2, NORMALIZE_MEANS, NORMALIZE_STDS).unwrap();
        for (a, b) in back.as_slice().iter().zip(&values) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
