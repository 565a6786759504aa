mod common;

use std::path::Path;
use std::sync::Arc;

use chrono::DateTime;
use common::*;
use sartriage::detect::{DetectionOut, DetectionsLine};
use sartriage::ingest::{CorpusManifest, GpsCoord, ImageRecord, SourceKind};
use sartriage::rx::{ClusterOutput, RxImageOutput};
use sartriage::synth::save_png;
use sartriage::triage::{
    build_candidates, CandidateRecord, CandidateSource, CandidateStatus, Decision, ListFilter, TriageError,
    TriageStore, VerdictRequest, OUTLINE_COLOR,
};

struct Fixture {
    images: tempfile::TempDir,
    store_dir: tempfile::TempDir,
    manifest: CorpusManifest,
    rx: Vec<RxImageOutput>,
    dets: Vec<DetectionsLine>,
}

fn record(name: &str, w: u32, h: u32, gps: Option<GpsCoord>) -> ImageRecord {
    ImageRecord {
        id: name.into(),
        source_path: format!("sub/{name}"),
        source_kind: SourceKind::Photo,
        parent_video: None,
        frame_time_s: None,
        width_px: w,
        height_px: h,
        gps,
        captured_at: None,
    }
}

fn det(x: f64, y: f64, w: f64, h: f64, score: f64) -> DetectionOut {
    DetectionOut { x, y, w, h, score, label: "person".into(), contributors: 1 }
}

fn fixture() -> Fixture {
    let images = tempfile::tempdir().unwrap();
    let mut manifest = CorpusManifest::empty(images.path().display().to_string());
    manifest.records.push(record("a.png", 320, 240, Some(GpsCoord { lat: 34.0, lon: 135.9 })));
    manifest.records.push(record("b.png", 200, 100, None));
    manifest.records.push(record("c.png", 200, 100, None));
    for r in &manifest.records {
        save_png(&magenta_scene(r.width_px, r.height_px, &[], 1), &images.path().join(&r.source_path)).unwrap();
    }
    let cluster = |b: [u32; 4]| ClusterOutput { bbox_native: b, pixel_count: 300, centroid: [0.0, 0.0] };
    let rx = vec![
        RxImageOutput { image_id: "a.png".into(), is_candidate: true, clusters: vec![cluster([100, 80, 30, 20])], error: None },
        // clusters outside the accepted count range do not flag the image
        RxImageOutput {
            image_id: "b.png".into(),
            is_candidate: false,
            clusters: (0..5).map(|i| cluster([i * 30, 10, 10, 10])).collect(),
            error: None,
        },
    ];
    let dets = vec![
        DetectionsLine {
            image_id: "a.png".into(),
            detections: vec![det(0.0, 0.0, 10.0, 10.0, 0.9), det(300.0, 230.0, 40.0, 40.0, 1.3), det(150.0, 60.0, 12.0, 24.0, 0.4)],
            error: None,
        },
        DetectionsLine {
            image_id: "b.png".into(),
            detections: vec![det(20.0, 20.0, 10.0, 10.0, 0.7), det(500.0, 500.0, 5.0, 5.0, 0.7)],
            error: None,
        },
        DetectionsLine { image_id: "c.png".into(), detections: vec![det(1.0, 1.0, 2.0, 2.0, 0.5)], error: Some("decode".into()) },
        DetectionsLine { image_id: "ghost.png".into(), detections: vec![det(1.0, 1.0, 2.0, 2.0, 0.5)], error: None },
    ];
    Fixture { images, store_dir: tempfile::tempdir().unwrap(), manifest, rx, dets }
}

fn candidates(f: &Fixture, t: i64) -> Vec<CandidateRecord> {
    let (c, skipped) = build_candidates(&f.rx, &f.dets, &f.manifest, DateTime::from_timestamp(t, 0).unwrap());
    assert_eq!(skipped.len(), 2, "{skipped:?}");
    c
}

fn open(f: &Fixture) -> TriageStore {
    TriageStore::open(f.store_dir.path(), f.images.path()).unwrap()
}

fn req(decision: Decision) -> VerdictRequest {
    VerdictRequest { decision, reviewer: "team-2".into(), notes: String::new() }
}

fn find<'a>(cands: &'a [CandidateRecord], image: &str, x: f64) -> &'a CandidateRecord {
    cands.iter().find(|c| c.image_id == image && c.region.x == x).unwrap()
}

#[test]
fn candidates_carry_gps_scores_and_clamped_regions() {
    let f = fixture();
    let c = candidates(&f, 1_700_000_000);
    assert_eq!(c.len(), 5);
    assert_eq!(c.iter().filter(|c| c.source == CandidateSource::Rx).count(), 1);
    let rx = c.iter().find(|c| c.source == CandidateSource::Rx).unwrap();
    assert_eq!((rx.region.to_xywh(), rx.score), ([100.0, 80.0, 30.0, 20.0], None));
    assert_eq!(rx.gps, Some(GpsCoord { lat: 34.0, lon: 135.9 }));
    let edge = find(&c, "a.png", 300.0);
    assert_eq!(edge.region.to_xywh(), [300.0, 230.0, 20.0, 10.0]);
    assert_eq!(edge.score, Some(1.0));
    assert_eq!(find(&c, "b.png", 20.0).gps, None);
    assert_eq!(find(&c, "b.png", 20.0).source_path, "sub/b.png");
    assert!(c.iter().all(|c| c.status == CandidateStatus::Pending));
}

#[test]
fn ingest_is_idempotent_and_keeps_verdicts() {
    let f = fixture();
    let store = open(&f);
    assert_eq!(store.ingest(candidates(&f, 1_700_000_000)).unwrap(), 5);
    let id = find(&candidates(&f, 0), "a.png", 0.0).candidate_id.clone();
    store.record_verdict(&id, req(Decision::Elevated)).unwrap();
    // re-ingesting later outputs adds nothing and resets nothing
    assert_eq!(store.ingest(candidates(&f, 1_800_000_000)).unwrap(), 0);
    assert_eq!(store.len(), 5);
    assert_eq!(store.get(&id).unwrap().status, CandidateStatus::Elevated);
    assert_eq!(store.get(&id).unwrap().created_at.timestamp(), 1_700_000_000);
}

#[test]
fn pagination_and_filters() {
    let f = fixture();
    let store = open(&f);
    let mut c = candidates(&f, 1_700_000_000);
    for (i, rec) in c.iter_mut().enumerate() {
        rec.created_at = DateTime::from_timestamp(1_700_000_000 + (4 - i as i64), 0).unwrap();
    }
    store.ingest(c).unwrap();
    let page = |n, size| store.list(&ListFilter { page: Some(n), page_size: Some(size), ..Default::default() }).unwrap();
    let sizes: Vec<usize> = (1..=3).map(|n| page(n, 2).items.len()).collect();
    assert_eq!(sizes, [2, 2, 1]);
    assert_eq!((page(1, 2).total, page(1, 2).total_pages), (5, 3));
    assert!(page(4, 2).items.is_empty());
    let all: Vec<_> = (1..=3).flat_map(|n| page(n, 2).items).collect();
    assert!(all.windows(2).all(|w| w[0].created_at <= w[1].created_at), "oldest first");
    let mut ids: Vec<&str> = all.iter().map(|c| c.candidate_id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 5);

    for bad in [(0, 2), (1, 0), (1, 1001)] {
        let err = store.list(&ListFilter { page: Some(bad.0), page_size: Some(bad.1), ..Default::default() }).unwrap_err();
        assert!(matches!(err, TriageError::BadRequest(_)), "{bad:?}");
    }
    store.record_verdict(&all[0].candidate_id, req(Decision::Dismissed)).unwrap();
    let dismissed = store.list(&ListFilter { status: Some(CandidateStatus::Dismissed), ..Default::default() }).unwrap();
    assert_eq!(dismissed.total, 1);
    let rx = store.list(&ListFilter { source: Some(CandidateSource::Rx), ..Default::default() }).unwrap();
    assert_eq!(rx.total, 1);
    let stats = store.stats();
    assert_eq!(stats.by_status[&CandidateStatus::Pending], 4);
    assert_eq!(stats.by_status[&CandidateStatus::Unsure], 0);
    assert_eq!(stats.by_source[&CandidateSource::Detect], 4);
}

fn is_outline(p: &image::Rgb<u8>) -> bool {
    p.0 == OUTLINE_COLOR
}

#[test]
fn crops_are_clamped_and_outlined() {
    let f = fixture();
    let store = open(&f);
    let c = candidates(&f, 0);
    store.ingest(c.clone()).unwrap();

    // top-left corner: no context is available above or left
    let corner = image::load_from_memory(&store.crop_png(&find(&c, "a.png", 0.0).candidate_id, 20).unwrap()).unwrap().to_rgb8();
    assert_eq!(corner.dimensions(), (30, 30));
    for (x, y) in [(0, 0), (9, 0), (0, 9), (9, 9), (5, 0), (0, 5)] {
        assert!(is_outline(corner.get_pixel(x, y)), "({x},{y}) should be outline");
    }
    for (x, y) in [(5, 5), (10, 10), (10, 0), (29, 29)] {
        assert!(!is_outline(corner.get_pixel(x, y)), "({x},{y}) should not be outline");
    }

    // bottom-right corner after clamping to 320x240
    let edge = image::load_from_memory(&store.crop_png(&find(&c, "a.png", 300.0).candidate_id, 20).unwrap()).unwrap().to_rgb8();
    assert_eq!(edge.dimensions(), (40, 30));
    assert!(is_outline(edge.get_pixel(20, 20)) && is_outline(edge.get_pixel(39, 29)));
    assert!(!is_outline(edge.get_pixel(19, 19)));

    let inner = image::load_from_memory(&store.crop_png(&find(&c, "a.png", 150.0).candidate_id, 8).unwrap()).unwrap().to_rgb8();
    assert_eq!(inner.dimensions(), (12 + 16, 24 + 16));
    assert!(is_outline(inner.get_pixel(8, 8)) && is_outline(inner.get_pixel(19, 31)) && !is_outline(inner.get_pixel(7, 8)));
}

#[test]
fn missing_source_image_is_gone_not_fatal() {
    let f = fixture();
    let store = open(&f);
    let c = candidates(&f, 0);
    store.ingest(c.clone()).unwrap();
    let id = find(&c, "b.png", 20.0).candidate_id.clone();
    std::fs::remove_file(f.images.path().join("sub/b.png")).unwrap();
    assert!(matches!(store.crop_png(&id, 10), Err(TriageError::SourceGone(..))));
    // the candidate itself is still reviewable
    assert_eq!(store.record_verdict(&id, req(Decision::Dismissed)).unwrap().status, CandidateStatus::Dismissed);
    assert!(matches!(store.record_verdict("0000", req(Decision::Dismissed)), Err(TriageError::NotFound(_))));
}

#[test]
fn statuses_survive_reopen_and_snapshot_rewrites() {
    let f = fixture();
    let c = candidates(&f, 0);
    let ids: Vec<String> = c.iter().map(|c| c.candidate_id.clone()).collect();
    {
        let store = open(&f);
        store.ingest(c).unwrap();
        let order = [Decision::Unsure, Decision::Dismissed, Decision::Elevated];
        for k in 0..70 {
            store.record_verdict(&ids[k % ids.len()], req(order[k % 3])).unwrap();
        }
    }
    let store = open(&f);
    assert_eq!(store.verdicts().unwrap().len(), 70);
    // verdict 65..69 land on ids 0..4 with decisions (65+i) % 3
    let order = [CandidateStatus::Unsure, CandidateStatus::Dismissed, CandidateStatus::Elevated];
    for (i, id) in ids.iter().enumerate() {
        let last = (0..70).filter(|k| k % ids.len() == i).max().unwrap();
        assert_eq!(store.get(id).unwrap().status, order[last % 3]);
    }
}

#[test]
fn export_puts_longitude_first() {
    let f = fixture();
    let store = open(&f);
    let c = candidates(&f, 0);
    store.ingest(c.clone()).unwrap();
    store.record_verdict(&find(&c, "a.png", 0.0).candidate_id, req(Decision::Elevated)).unwrap();
    store.record_verdict(&find(&c, "b.png", 20.0).candidate_id, req(Decision::Elevated)).unwrap();
    store.record_verdict(&find(&c, "a.png", 150.0).candidate_id, req(Decision::Unsure)).unwrap();
    let geo = store.export_elevated();
    assert_eq!(geo["features"].as_array().unwrap().len(), 1);
    assert_eq!(geo["features"][0]["geometry"]["coordinates"], serde_json::json!([135.9, 34.0]));
    assert_eq!(geo["features"][0]["properties"]["image_id"], "a.png");
    assert_eq!(geo["no_location"][0]["image_id"], "b.png");
}

fn serve(store: TriageStore) -> (tokio::runtime::Runtime, String) {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(1).enable_all().build().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel();
    rt.spawn(sartriage::triage::serve(Arc::new(store), "127.0.0.1:0".parse().unwrap(), Some(tx)));
    let addr = rt.block_on(rx).unwrap();
    (rt, format!("http://{addr}"))
}

#[test]
fn http_error_statuses() {
    let f = fixture();
    let store = open(&f);
    let c = candidates(&f, 0);
    store.ingest(c.clone()).unwrap();
    let id = find(&c, "b.png", 20.0).candidate_id.clone();
    std::fs::remove_file(f.images.path().join("sub/b.png")).unwrap();
    let (_rt, base) = serve(store);
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let status = |r: Result<ureq::http::Response<ureq::Body>, ureq::Error>| r.unwrap().status().as_u16();

    assert_eq!(status(agent.get(&format!("{base}/api/candidates/{id}/crop")).call()), 410);
    assert_eq!(status(agent.get(&format!("{base}/api/candidates/{id}")).call()), 200);
    assert_eq!(status(agent.get(&format!("{base}/api/candidates/feed")).call()), 404);
    assert_eq!(status(agent.get(&format!("{base}/api/candidates?page=0")).call()), 400);
    assert_eq!(status(agent.get(&format!("{base}/api/candidates?status=lost")).call()), 400);
    let post = |body: &str| {
        status(agent.post(&format!("{base}/api/candidates/{id}/verdict")).header("content-type", "application/json").send(body))
    };
    assert!((400..500).contains(&post(r#"{"decision":"maybe"}"#)));
    assert_eq!(post(r#"{"decision":"unsure"}"#), 200);
    assert_eq!(
        status(agent.post(&format!("{base}/api/candidates/feed/verdict")).header("content-type", "application/json").send(r#"{"decision":"unsure"}"#)),
        404
    );
}

#[test]
fn cli_triage_ingest_twice_adds_nothing() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    f.manifest.save(Path::new(&p("m.json"))).unwrap();
    let lines = |v: Vec<String>| v.join("\n") + "\n";
    std::fs::write(p("rx.jsonl"), lines(f.rx.iter().map(|l| serde_json::to_string(l).unwrap()).collect())).unwrap();
    std::fs::write(p("det.jsonl"), lines(f.dets.iter().map(|l| serde_json::to_string(l).unwrap()).collect())).unwrap();
    let store = p("store");
    let args = ["triage-ingest", "--store", &store, "--manifest", &p("m.json"), "--rx", &p("rx.jsonl"), "--detections", &p("det.jsonl")];
    // the ghost image and the out-of-frame box are reported
    assert_eq!(run_cli(&args), 1);
    assert_eq!(run_cli(&args), 1);
    let reopened = TriageStore::open(Path::new(&store), f.images.path()).unwrap();
    assert_eq!(reopened.len(), 5);
}
