//! GeoJSON emission (RFC 7946) and a strict structural validator.

use serde_json::{json, Map, Value};

use oseg_data::{Category, GeoRef};

use crate::error::{PipelineError, Result};
use crate::slicks::{ring_signed_area, Slick};

/// Properties carried by every emitted slick feature.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub product_id: String,
    pub timestamp: String,
}

/// One slick as a GeoJSON feature: the pixel-corner polygon mapped through
/// the affine georeference, exterior ring counter-clockwise, coordinates in
/// lon/lat order.
pub fn slick_feature(
    slick: &Slick,
    georef: &GeoRef,
    ctx: &FeatureContext,
    categories: Option<&[(Category, usize)]>,
) -> Result<Value> {
    if slick.polygon.len() < 4 {
        return Err(PipelineError::Pipeline(format!(
            "slick polygon has {} points; tracing must close a ring",
            slick.polygon.len()
        )));
    }
    let mut ring: Vec<(f64, f64)> = slick
        .polygon
        .iter()
        .map(|&(row, col)| georef.corner_lonlat(row, col))
        .collect();
    // RFC 7946 wants counter-clockwise exterior rings in (lon, lat).
    if ring_signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    let coords: Vec<Value> = ring.iter().map(|&(lon, lat)| json!([lon, lat])).collect();

    let mut props = Map::new();
    props.insert("product_id".into(), json!(ctx.product_id));
    props.insert("timestamp".into(), json!(ctx.timestamp));
    props.insert("area_km2".into(), json!(slick.area_km2));
    props.insert("nn_distance_km".into(), match slick.nn_distance_km {
        Some(d) => json!(d),
        None => Value::Null,
    });
    props.insert("mean_score".into(), json!(slick.mean_score));
    if let Some(cats) = categories {
        let mut m = Map::new();
        for (cat, idx) in cats {
            m.insert(cat.name().into(), json!(cat.value_names()[*idx]));
        }
        props.insert("categories".into(), Value::Object(m));
    }

    Ok(json!({
        "type": "Feature",
        "geometry": {
            "type": "Polygon",
            "coordinates": [coords],
        },
        "properties": Value::Object(props),
    }))
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({
        "type": "FeatureCollection",
        "features": features,
    })
}

pub fn to_document(collection: &Value) -> String {
    serde_json::to_string_pretty(collection).expect("GeoJSON values always serialize")
}

/// Strict structural validation of a GeoJSON document: collection/feature
/// typing, polygon rings (closed, at least 4 positions, finite lon/lat in
/// range), counter-clockwise exterior rings, and a properties object on
/// every feature. Returns the list of violations.
pub fn validate_geojson(doc: &str) -> std::result::Result<(), Vec<String>> {
    let mut errs = Vec::new();
    let v: Value = match serde_json::from_str(doc) {
        Ok(v) => v,
        Err(e) => return Err(vec![format!("not valid JSON: {e}")]),
    };
    if v["type"] != "FeatureCollection" {
        errs.push("root type must be FeatureCollection".into());
    }
    let Some(features) = v["features"].as_array() else {
        errs.push("features must be an array".into());
        return Err(errs);
    };
    for (i, f) in features.iter().enumerate() {
        if f["type"] != "Feature" {
            errs.push(format!("feature {i}: type must be Feature"));
        }
        if !f["properties"].is_object() {
            errs.push(format!("feature {i}: properties must be an object"));
        }
        let g = &f["geometry"];
        if g["type"] != "Polygon" {
            errs.push(format!("feature {i}: geometry type must be Polygon"));
            continue;
        }
        let Some(rings) = g["coordinates"].as_array() else {
            errs.push(format!("feature {i}: coordinates must be an array of rings"));
            continue;
        };
        if rings.is_empty() {
            errs.push(format!("feature {i}: polygon needs an exterior ring"));
            continue;
        }
        for (ri, ring) in rings.iter().enumerate() {
            let Some(points) = ring.as_array() else {
                errs.push(format!("feature {i} ring {ri}: not an array"));
                continue;
            };
            if points.len() < 4 {
                errs.push(format!("feature {i} ring {ri}: fewer than 4 positions"));
                continue;
            }
            if points.first() != points.last() {
                errs.push(format!("feature {i} ring {ri}: ring is not closed"));
            }
            let mut coords = Vec::new();
            for (pi, p) in points.iter().enumerate() {
                let Some(pair) = p.as_array() else {
                    errs.push(format!("feature {i} ring {ri} position {pi}: not an array"));
                    continue;
                };
                if pair.len() < 2 {
                    errs.push(format!("feature {i} ring {ri} position {pi}: needs lon and lat"));
                    continue;
                }
                let (lon, lat) = (pair[0].as_f64(), pair[1].as_f64());
                match (lon, lat) {
                    (Some(lon), Some(lat)) => {
                        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                            errs.push(format!(
                                "feature {i} ring {ri} position {pi}: ({lon}, {lat}) out of range"
                            ));
                        }
                        coords.push((lon, lat));
                    }
                    _ => errs.push(format!("feature {i} ring {ri} position {pi}: non-numeric")),
                }
            }
            if ri == 0 && coords.len() >= 4 && ring_signed_area(&coords) < 0.0 {
                errs.push(format!("feature {i}: exterior ring is clockwise"));
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slicks::{extract_slicks, threshold_mask};
    use oseg_data::Grid;

    fn georef() -> GeoRef {
        GeoRef { origin_lon: 5.0, origin_lat: 60.0, lon_per_col: 1e-3, lat_per_row: -1e-3 }
    }

    fn ctx() -> FeatureContext {
        FeatureContext { product_id: "P1".into(), timestamp: "2019-03-01T06:00:00Z".into() }
    }

    #[test]
    fn square_slick_becomes_closed_five_point_ring() {
        let mut soft = Grid::new(8, 8, 0.0f32);
        for r in 2..4 {
            for c in 2..4 {
                soft.set(r, c, 0.9);
            }
        }
        let mask = threshold_mask(&soft, 0.5);
        let slicks = extract_slicks(&mask, &soft, 40.0);
        let f = slick_feature(&slicks[0], &georef(), &ctx(), None).unwrap();
        let ring = f["geometry"]["coordinates"][0].as_array().unwrap();
        assert_eq!(ring.len(), 5);
        assert_eq!(ring.first(), ring.last());
        let doc = to_document(&feature_collection(vec![f]));
        validate_geojson(&doc).unwrap();
    }

    #[test]
    fn pixel_corner_to_lonlat_hand_check() {
        // Corner (row 1, col 2) with 1e-3 spacing from (5, 60).
        let g = georef();
        let (lon, lat) = g.corner_lonlat(1.0, 2.0);
        assert!((lon - 5.002).abs() < 1e-12);
        assert!((lat - 59.999).abs() < 1e-12);
    }

    #[test]
    fn empty_collection_is_valid() {
        let doc = to_document(&feature_collection(vec![]));
        validate_geojson(&doc).unwrap();
    }

    #[test]
    fn validator_rejects_open_and_clockwise_rings() {
        let bad = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[0,1],[1,1],[0,0.5]]]}}]}"#;
        let errs = validate_geojson(bad).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("not closed")), "{errs:?}");

        let clockwise = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[0,1],[1,1],[1,0],[0,0]]]}}]}"#;
        let errs = validate_geojson(clockwise).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("clockwise")), "{errs:?}");
    }

    #[test]
    fn categories_render_value_names() {
        let mut soft = Grid::new(6, 6, 0.0f32);
        soft.set(2, 2, 0.9);
        let mask = threshold_mask(&soft, 0.5);
        let slicks = extract_slicks(&mask, &soft, 40.0);
        let cats = vec![(Category::LinearShape, 1usize), (Category::Contrast, 0usize)];
        let f = slick_feature(&slicks[0], &georef(), &ctx(), Some(&cats)).unwrap();
        assert_eq!(f["properties"]["categories"]["linear_shape"], "true");
        assert_eq!(f["properties"]["categories"]["contrast"], "strong");
    }
}
