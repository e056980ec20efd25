//! Browser demo bindings. Every export wraps a plain function below that also
//! builds and runs natively, which is where the tests exercise it.

use ccpc::baselines::b2_scale;
use ccpc::conditioning::{project_labels, LabelKde, SigmaRegionModel, DEFAULT_K};
use ccpc::metrics::extents;
use ccpc::shapes::{generate_dataset, ConditionVector, PointCloud, ShapeFamily};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

pub fn family(name: &str) -> Result<ShapeFamily, String> {
    match name {
        "box" => Ok(ShapeFamily::boxes()),
        "long_tail_box" => Ok(ShapeFamily::long_tailed_boxes()),
        "table" => Ok(ShapeFamily::tables()),
        "lamp" => Ok(ShapeFamily::lamps()),
        other => Err(format!("unknown family {other:?}")),
    }
}

/// Flat `x, y, z` points of one shape with the given extents.
pub fn shape_points(family_name: &str, size: [f32; 3], n_points: usize, seed: u64) -> Result<Vec<f32>, String> {
    let mut fam = family(family_name)?;
    fam.n_points = n_points;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = fam.sample_with_size(size, &mut rng).map_err(|e| e.to_string())?;
    Ok(shape.cloud.to_flat())
}

/// `(width, height, region)` triples for `count` dataset labels, with
/// regions fitted on the width/height projection.
pub fn region_labels(family_name: &str, count: usize, seed: u64) -> Result<Vec<f32>, String> {
    let fam = family(family_name)?;
    let data = generate_dataset(&fam, count, seed).map_err(|e| e.to_string())?;
    let full: Vec<Vec<f64>> = data
        .iter()
        .map(|c| c.label.as_slice().iter().map(|&v| v as f64).collect())
        .collect();
    let rows = project_labels(&full, &[0, 2]).map_err(|e| e.to_string())?;
    let kde = LabelKde::fit_rows(&rows).map_err(|e| e.to_string())?;
    let model = SigmaRegionModel::fit(&kde, &rows, DEFAULT_K).map_err(|e| e.to_string())?;
    Ok(rows
        .iter()
        .zip(model.regions())
        .flat_map(|(r, &g)| [r[0] as f32, r[1] as f32, g as f32])
        .collect())
}

/// The B2 baseline: `flat` rescaled per axis to the `target` extents.
pub fn b2_points(flat: &[f32], target: [f32; 3]) -> Result<Vec<f32>, String> {
    let cloud = PointCloud::from_flat(flat).map_err(|e| e.to_string())?;
    let scaled = b2_scale(&cloud, &ConditionVector::new(target.to_vec())).map_err(|e| e.to_string())?;
    Ok(scaled.to_flat())
}

pub fn cloud_extents(flat: &[f32]) -> Result<Vec<f32>, String> {
    let cloud = PointCloud::from_flat(flat).map_err(|e| e.to_string())?;
    Ok(extents(&cloud).iter().map(|&e| e as f32).collect())
}

#[wasm_bindgen(js_name = sampleShape)]
pub fn sample_shape_js(family: &str, width: f32, depth: f32, height: f32, n_points: usize, seed: u32) -> Result<Vec<f32>, JsValue> {
    shape_points(family, [width, depth, height], n_points, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = regionLabels)]
pub fn region_labels_js(family: &str, count: usize, seed: u32) -> Result<Vec<f32>, JsValue> {
    region_labels(family, count, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = b2Scale)]
pub fn b2_scale_js(flat: &[f32], width: f32, depth: f32, height: f32) -> Result<Vec<f32>, JsValue> {
    b2_points(flat, [width, depth, height]).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = cloudExtents)]
pub fn cloud_extents_js(flat: &[f32]) -> Result<Vec<f32>, JsValue> {
    cloud_extents(flat).map_err(|e| JsValue::from_str(&e))
}
