use std::sync::{Arc, Mutex};

use axum::http::StatusCode;
use indexmap::{IndexMap, IndexSet};
use regionlime_core::api::{
    decode_b64, encode_b64, CreateSessionResponse, EditResponse, ExplainResponse, MaskRequest, MaskResponse,
    SegmentRequest, SegmentResponse, SessionState,
};
use regionlime_core::editor::{apply_edits, EditSpec};
use regionlime_core::explainer::{compare_predictions, explain, render_overlay, trinary_mask, ExplainConfig, ReportRow};
use regionlime_core::image::{decode_image, decode_mask, ImageTensor, RegionMask};
use regionlime_core::predictor::{Classifier, PredictorSpec};
use regionlime_core::segmentation::{auto_segment, segment, suggest_counts, SegmentationConfig, SuperpixelMap};
use regionlime_core::Result;

use crate::error::ApiError;
use crate::Resolver;

/// How many evicted ids are remembered so they answer 410 rather than 404.
const EVICTED_MEMORY: usize = 4096;

/// Default superpixel budget offered for a fresh image: about half the
/// square root of its pixel count, kept within [2, 40].
pub fn suggested_total_k(height: usize, width: usize) -> usize {
    let k = ((height * width) as f64).sqrt() / 2.0;
    (k.round() as usize).clamp(2, 40)
}

pub struct Session {
    id: String,
    original: ImageTensor,
    original_png: String,
    spec: PredictorSpec,
    model: Arc<dyn Classifier>,
    mask: Option<(RegionMask, String)>,
    segmentation: Option<(SuperpixelMap, SegmentResponse)>,
    edits: EditSpec,
    edit: Option<(ImageTensor, EditResponse)>,
    explanation: Option<ExplainResponse>,
}

impl Session {
    pub fn create(image_b64: &str, spec: PredictorSpec, resolver: &Resolver) -> Result<Self> {
        let original = decode_image(&decode_b64(image_b64)?)?;
        let model = resolver(&spec)?;
        Ok(Self {
            id: uuid::Uuid::new_v4().simple().to_string(),
            original_png: encode_b64(&original.encode_png()),
            original,
            spec,
            model,
            mask: None,
            segmentation: None,
            edits: EditSpec::default(),
            edit: None,
            explanation: None,
        })
    }

    pub fn created_response(&self) -> CreateSessionResponse {
        let (height, width) = self.original.dims();
        CreateSessionResponse {
            session_id: self.id.clone(),
            height,
            width,
            channels: self.original.channels(),
            suggested_total_k: suggested_total_k(height, width),
        }
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            session_id: self.id.clone(),
            height: self.original.height(),
            width: self.original.width(),
            channels: self.original.channels(),
            predictor: self.spec.clone(),
            original_png: self.original_png.clone(),
            mask_png: self.mask.as_ref().map(|m| m.1.clone()),
            segmentation: self.segmentation.as_ref().map(|s| s.1.clone()),
            edits: self.edits.clone(),
            edit: self.edit.as_ref().map(|e| e.1.clone()),
            explanation: self.explanation.clone(),
        }
    }

    /// Replaces the mask; everything derived from the old one is dropped.
    pub fn set_mask(&mut self, req: MaskRequest) -> std::result::Result<MaskResponse, ApiError> {
        let dims = self.original.dims();
        let mask = match (req.mask, req.polygon) {
            (Some(png), None) => decode_mask(&decode_b64(&png)?, dims)?,
            (None, Some(vertices)) => {
                let m = RegionMask::from_polygon(dims.0, dims.1, &vertices)?;
                m.require_nonempty()?;
                m
            }
            _ => return Err(ApiError::bad_request("give exactly one of `mask` or `polygon`")),
        };
        let png = encode_b64(&mask.encode_png());
        let resp = MaskResponse { selected_pixels: mask.count(), mask_png: png.clone() };
        self.mask = Some((mask, png));
        self.segmentation = None;
        self.edits = EditSpec::default();
        self.edit = None;
        self.explanation = None;
        Ok(resp)
    }

    pub fn segment_job(&self, req: &SegmentRequest) -> std::result::Result<SegmentJob, ApiError> {
        let mut cfg = SegmentationConfig::default();
        if let Some(w) = req.spatial_weight {
            cfg.spatial_weight = w;
        }
        if let Some(s) = req.seed {
            cfg.seed = s;
        }
        let (h, w) = self.original.dims();
        let total = req.total_k.unwrap_or_else(|| suggested_total_k(h, w));
        let plan = if req.auto {
            SegmentPlan::Auto(total)
        } else {
            let Some((mask, _)) = &self.mask else {
                return Err(ApiError::conflict("mask_required", "set a mask first or request `auto: true`"));
            };
            let (inner, outer) = match (req.inner_k, req.outer_k) {
                (Some(i), Some(o)) => (i, o),
                (None, None) => suggest_counts(mask, total)?,
                _ => return Err(ApiError::bad_request("give both inner_k and outer_k, or total_k")),
            };
            SegmentPlan::Masked(mask.clone(), inner, outer)
        };
        Ok(SegmentJob { image: self.original.clone(), cfg, plan })
    }

    pub fn commit_segmentation(&mut self, (sp, resp): (SuperpixelMap, SegmentResponse)) -> SegmentResponse {
        self.segmentation = Some((sp, resp.clone()));
        self.explanation = None;
        resp
    }

    pub fn edit_job(&self, spec: EditSpec) -> std::result::Result<EditJob, ApiError> {
        let Some((mask, _)) = &self.mask else {
            return Err(ApiError::conflict("mask_required", "set a mask before editing"));
        };
        Ok(EditJob { image: self.original.clone(), mask: mask.clone(), spec, model: self.model.clone() })
    }

    pub fn commit_edit(&mut self, out: EditOutput) -> EditResponse {
        self.edits = out.spec;
        self.edit = Some((out.image, out.response.clone()));
        self.explanation = None;
        out.response
    }

    pub fn explain_job(&self, cfg: ExplainConfig) -> std::result::Result<ExplainJob, ApiError> {
        let Some((sp, _)) = &self.segmentation else {
            return Err(ApiError::conflict("segment_required", "segment the image before explaining"));
        };
        let (image, edited) = match &self.edit {
            Some((img, _)) if !self.edits.0.is_empty() => (img.clone(), true),
            _ => (self.original.clone(), false),
        };
        Ok(ExplainJob { image, edited, sp: sp.clone(), model: self.model.clone(), cfg })
    }

    pub fn commit_explanation(&mut self, resp: ExplainResponse) -> ExplainResponse {
        self.explanation = Some(resp.clone());
        resp
    }
}

enum SegmentPlan {
    Auto(usize),
    Masked(RegionMask, usize, usize),
}

pub struct SegmentJob {
    image: ImageTensor,
    cfg: SegmentationConfig,
    plan: SegmentPlan,
}

impl SegmentJob {
    pub fn run(self) -> Result<(SuperpixelMap, SegmentResponse)> {
        let (sp, inner_k, outer_k) = match self.plan {
            SegmentPlan::Auto(k) => (auto_segment(&self.image, k, &self.cfg)?, 0, k),
            SegmentPlan::Masked(mask, i, o) => (segment(&self.image, &mask, &self.cfg.clone().with_counts(i, o))?, i, o),
        };
        let resp = SegmentResponse { inner_k, outer_k, labels_png: encode_b64(&sp.encode_label_png()), superpixels: sp.clone() };
        Ok((sp, resp))
    }
}

pub struct EditJob {
    image: ImageTensor,
    mask: RegionMask,
    spec: EditSpec,
    model: Arc<dyn Classifier>,
}

pub struct EditOutput {
    spec: EditSpec,
    image: ImageTensor,
    response: EditResponse,
}

impl EditJob {
    pub fn run(self) -> Result<EditOutput> {
        let result = apply_edits(&self.image, &self.mask, &self.spec)?;
        let report: Vec<ReportRow> = compare_predictions(self.model.as_ref(), &self.image, &result.image)?;
        let response = EditResponse {
            edited_png: encode_b64(&result.image.encode_png()),
            mask_png: encode_b64(&result.mask.encode_png()),
            inpainted_pixels: result.inpainted_pixels,
            report,
        };
        Ok(EditOutput { spec: self.spec, image: result.image, response })
    }
}

pub struct ExplainJob {
    image: ImageTensor,
    edited: bool,
    sp: SuperpixelMap,
    model: Arc<dyn Classifier>,
    cfg: ExplainConfig,
}

impl ExplainJob {
    pub fn run(self) -> Result<ExplainResponse> {
        let explanation = explain(&self.image, &self.sp, self.model.as_ref(), &self.cfg)?;
        let overlay = render_overlay(&self.image, &self.sp, &explanation)?;
        let trinary = trinary_mask(&self.sp, &explanation)?;
        Ok(ExplainResponse {
            explanation,
            edited: self.edited,
            overlay_png: encode_b64(&overlay.image().encode_png()),
            trinary_png: encode_b64(&trinary.encode_png()),
        })
    }
}

type Shared = Arc<tokio::sync::Mutex<Session>>;

struct Table {
    live: IndexMap<String, Shared>,
    evicted: IndexSet<String>,
}

/// Live sessions in least-recently-used order.
pub struct Sessions {
    cap: usize,
    table: Mutex<Table>,
}

impl Sessions {
    pub fn new(cap: usize) -> Self {
        Self { cap: cap.max(1), table: Mutex::new(Table { live: IndexMap::new(), evicted: IndexSet::new() }) }
    }

    pub fn insert(&self, session: Session) {
        let mut t = self.table.lock().expect("session table poisoned");
        while t.live.len() >= self.cap {
            if let Some((old, _)) = t.live.shift_remove_index(0) {
                tracing::info!(session = %old, "evicted");
                t.evicted.insert(old);
                if t.evicted.len() > EVICTED_MEMORY {
                    t.evicted.shift_remove_index(0);
                }
            }
        }
        t.live.insert(session.id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    }

    pub fn get(&self, id: &str) -> std::result::Result<Shared, ApiError> {
        let mut t = self.table.lock().expect("session table poisoned");
        if let Some(s) = t.live.shift_remove(id) {
            t.live.insert(id.to_string(), s.clone());
            return Ok(s);
        }
        if t.evicted.contains(id) {
            return Err(ApiError::new(StatusCode::GONE, "session_evicted", format!("session {id} was evicted")));
        }
        Err(ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id}")))
    }
}
