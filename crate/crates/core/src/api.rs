//! JSON bodies of the HTTP API. Binary artifacts travel as base64 strings.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::editor::EditSpec;
use crate::error::{Error, Result};
use crate::explainer::{Explanation, ReportRow};
use crate::predictor::PredictorSpec;
use crate::segmentation::SuperpixelMap;

pub fn encode_b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

/// Decodes base64, tolerating a `data:<mime>;base64,` prefix.
pub fn decode_b64(s: &str) -> Result<Vec<u8>> {
    let body = match s.split_once(";base64,") {
        Some((prefix, rest)) if prefix.starts_with("data:") => rest,
        _ => s,
    };
    STANDARD
        .decode(body.trim())
        .map_err(|e| Error::MalformedImage(format!("invalid base64: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    /// Base64 PNG or JPEG.
    pub image: String,
    /// Falls back to the server's default predictor when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor: Option<PredictorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub suggested_total_k: usize,
}

/// Exactly one of `mask` (base64 PNG) or `polygon` (`[x, y]` vertices in
/// image pixel coordinates).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MaskRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskResponse {
    pub selected_pixels: usize,
    pub mask_png: String,
}

/// Either `total_k` (split by area) or both `inner_k` and `outer_k`.
/// Without a stored mask, `auto: true` segments the whole image into
/// `total_k` superpixels.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SegmentRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub auto: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub inner_k: usize,
    pub outer_k: usize,
    pub superpixels: SuperpixelMap,
    pub labels_png: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub edited_png: String,
    pub mask_png: String,
    pub inpainted_pixels: usize,
    pub report: Vec<ReportRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainResponse {
    pub explanation: Explanation,
    /// True when the explained image carries the session's edits.
    pub edited: bool,
    pub overlay_png: String,
    pub trinary_png: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub predictor: PredictorSpec,
    pub original_png: String,
    pub mask_png: Option<String>,
    pub segmentation: Option<SegmentResponse>,
    pub edits: EditSpec,
    pub edit: Option<EditResponse>,
    pub explanation: Option<ExplainResponse>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base64_round_trip_with_data_url() {
        let raw = b"\x89PNG\r\n";
        let s = encode_b64(raw);
        assert_eq!(decode_b64(&s).unwrap(), raw);
        assert_eq!(decode_b64(&format!("data:image/png;base64,{s}")).unwrap(), raw);
        assert!(matches!(decode_b64("@@@"), Err(Error::MalformedImage(_))));
    }

    #[test]
    fn mask_request_shapes() {
        let poly: MaskRequest = serde_json::from_str(r#"{"polygon":[[0,0],[4,0],[0,4]]}"#).unwrap();
        assert_eq!(poly.polygon.unwrap().len(), 3);
        assert!(poly.mask.is_none());
        let seg: SegmentRequest = serde_json::from_str(r#"{"total_k":20}"#).unwrap();
        assert_eq!(seg.total_k, Some(20));
        assert!(!seg.auto);
    }
}
