//! Plot descriptions as Vega-Lite JSON with the data inlined.

use serde_json::json;
use squeezetrack::AlphaPoint;

pub fn alpha_series(series: &[AlphaPoint], prov: &[(String, String)]) -> String {
    let values: Vec<_> = series
        .iter()
        .map(|p| json!({ "t": p.t, "alpha": p.alpha, "lo": p.alpha - p.stderr, "hi": p.alpha + p.stderr }))
        .collect();
    let meta: serde_json::Map<String, serde_json::Value> =
        prov.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let spec = json!({
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "description": "Sliding-window diffusive exponent with one-standard-error band",
        "usermeta": meta,
        "data": { "values": values },
        "width": 640,
        "height": 240,
        "encoding": {
            "x": { "field": "t", "type": "quantitative", "title": "window start (s)" }
        },
        "layer": [
            {
                "mark": { "type": "area", "opacity": 0.25 },
                "encoding": {
                    "y": { "field": "lo", "type": "quantitative", "title": "alpha" },
                    "y2": { "field": "hi" }
                }
            },
            {
                "mark": { "type": "line", "point": true },
                "encoding": { "y": { "field": "alpha", "type": "quantitative" } }
            }
        ]
    });
    let mut text = serde_json::to_string_pretty(&spec).expect("plot spec serializes");
    text.push('\n');
    text
}
