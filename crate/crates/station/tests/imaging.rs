use gcs_core::sim::{decode_frame_marks, synthetic_frame};
use gcs_core::snapshot::{rectify_raster, ClickScript, CrackClicks, PanelDims, PointSpace, Raster};
use gcs_station::imaging::{frame_png, measure_file, png_bytes, raster_from_image, raster_to_image};
use serde_json::json;

#[test]
fn frame_png_carries_index_and_stamp() {
    let png = frame_png(&json!({"index": 4242, "stamp": 12.345, "width": 160, "height": 120})).unwrap();
    let img = image::load_from_memory(&png).unwrap();
    assert_eq!((img.width(), img.height()), (160, 120));
    let r = raster_from_image(&img);
    assert_eq!(decode_frame_marks(&r), Some((4242, 12345)));
}

#[test]
fn frame_png_needs_an_index() {
    assert!(frame_png(&json!({"stamp": 1.0})).is_err());
}

#[test]
fn raster_image_round_trip() {
    let r = synthetic_frame(7, 0.5, 96, 40);
    let back = raster_from_image(&image::DynamicImage::ImageRgba8(raster_to_image(&r)));
    assert_eq!(back, r);
    let decoded = image::load_from_memory(&png_bytes(&r).unwrap()).unwrap();
    assert_eq!(raster_from_image(&decoded), r);
}

fn checkerboard(w: u32, h: u32) -> Raster {
    let mut r = Raster::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let c = if (x / 10 + y / 10) % 2 == 0 { 255 } else { 0 };
            r.put(x, y, [c, c, c, 255]);
        }
    }
    r
}

#[test]
fn measure_file_writes_rectified_image() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("panel.png");
    std::fs::write(&src, png_bytes(&checkerboard(200, 150)).unwrap()).unwrap();
    let script = ClickScript {
        corners: [[20.0, 10.0], [180.0, 20.0], [170.0, 140.0], [30.0, 130.0]],
        panel: PanelDims {
            width_cm: 40.0,
            height_cm: 30.0,
        },
        target_px_per_cm: 4.0,
        scale_mark: None,
        cracks: vec![CrackClicks {
            label: Some("c1".into()),
            space: PointSpace::Rectified,
            points: vec![[0.0, 0.0], [40.0, 0.0], [40.0, 30.0]],
        }],
    };
    let out = dir.path().join("rect.png");
    let session = measure_file(&src, &script, Some(&out)).unwrap();
    assert!((session.measurements[0].length_cm - 17.5).abs() < 1e-9);
    let rect = image::open(&out).unwrap();
    assert_eq!((rect.width(), rect.height()), (160, 120));
    let expected = rectify_raster(&checkerboard(200, 150), &session.homography, 160, 120).unwrap();
    assert_eq!(raster_from_image(&rect), expected);
}

#[test]
fn measure_file_reports_missing_image() {
    let script: ClickScript = serde_json::from_value(json!({
        "corners": [[0, 0], [10, 0], [10, 10], [0, 10]],
        "panel": {"width_cm": 1, "height_cm": 1},
        "target_px_per_cm": 1,
        "cracks": []
    }))
    .unwrap();
    let err = measure_file(std::path::Path::new("/nonexistent/x.png"), &script, None).unwrap_err();
    assert!(format!("{err:#}").contains("x.png"));
}
