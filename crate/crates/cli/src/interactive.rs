use std::future::Future;

use regionlime_client::Client;
use regionlime_core::api::{decode_b64, SegmentRequest};
use regionlime_core::editor::EditSpec;
use regionlime_core::explainer::ExplainConfig;
use regionlime_service::ServiceConfig;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::{ensure_dir, provenance, read_file, write_json, EditArgs, ExplainArgs, Outcome, SegmentArgs, SegmentOpts};

/// Runs `f` against `server`, or against a loopback service started for
/// this process.
fn with_client<F, Fut>(server: Option<&str>, f: F) -> CliResult<Outcome>
where
    F: FnOnce(Client) -> Fut,
    Fut: Future<Output = CliResult<Outcome>>,
{
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let base = match server {
            Some(url) => url.to_string(),
            None => {
                let addr = regionlime_service::spawn(([127, 0, 0, 1], 0).into(), ServiceConfig::default()).await?;
                format!("http://{addr}")
            }
        };
        f(Client::new(base)).await
    })
}

fn write_b64(path: &std::path::Path, b64: &str) -> CliResult<()> {
    let bytes = decode_b64(b64)?;
    std::fs::write(path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Uploads the mask if any and segments; returns the segmentation response.
async fn prepare(
    client: &Client,
    id: &str,
    opts: &SegmentOpts,
    seed: u64,
) -> CliResult<regionlime_core::api::SegmentResponse> {
    if let Some(mask) = &opts.mask {
        client.put_mask_png(id, &read_file(mask)?).await?;
    }
    let req = SegmentRequest {
        total_k: opts.total_k,
        inner_k: opts.inner_k,
        outer_k: opts.outer_k,
        spatial_weight: opts.spatial_weight,
        seed: Some(seed),
        auto: opts.mask.is_none(),
    };
    Ok(client.segment(id, &req).await?)
}

pub fn explain(server: Option<&str>, args: &ExplainArgs) -> CliResult<Outcome> {
    let image = read_file(&args.image)?;
    ensure_dir(&args.out)?;
    with_client(server, |client| async move {
        let session = client.create_session(&image, Some(args.predictor.clone())).await?;
        let id = session.session_id;
        let seg = prepare(&client, &id, &args.seg, args.seed).await?;
        let cfg = ExplainConfig {
            num_samples: args.samples,
            num_features: args.features,
            kernel_width: args.kernel_width,
            ridge_alpha: args.ridge_alpha,
            occlusion: args.occlusion,
            target_class: args.target_class,
            distance: args.distance,
            seed: args.seed,
        };
        let resp = client.explain(&id, &cfg).await?;
        let e = &resp.explanation;
        write_json(
            &args.out.join("explanation.json"),
            &json!({
                "provenance": provenance("explain", args),
                "segmentation": { "inner_k": seg.inner_k, "outer_k": seg.outer_k },
                "explain_config": cfg,
                "explanation": e,
            }),
        )?;
        write_b64(&args.out.join("overlay.png"), &resp.overlay_png)?;
        write_b64(&args.out.join("trinary.png"), &resp.trinary_png)?;
        let c = &e.coverage;
        Ok(Outcome {
            human: format!(
                "class {} ({}): positive {:.1}%, negative {:.1}%, neutral {:.1}%, surrogate R2 {:.3}; wrote {}",
                e.target_class,
                e.class_names.get(e.target_class).map_or("?", |s| s.as_str()),
                c.positive_pct,
                c.negative_pct,
                c.neutral_pct,
                e.surrogate_r2,
                args.out.display()
            ),
            json: json!({ "out": args.out, "target_class": e.target_class, "coverage": c, "r2": e.surrogate_r2 }),
        })
    })
}

pub fn edit(server: Option<&str>, args: &EditArgs) -> CliResult<Outcome> {
    let image = read_file(&args.image)?;
    let mask = read_file(&args.mask)?;
    let spec: EditSpec = serde_json::from_slice(&read_file(&args.spec)?)?;
    ensure_dir(&args.out)?;
    with_client(server, |client| async move {
        let id = client.create_session(&image, Some(args.predictor.clone())).await?.session_id;
        client.put_mask_png(&id, &mask).await?;
        let resp = client.edit(&id, &spec).await?;
        write_b64(&args.out.join("edited.png"), &resp.edited_png)?;
        write_json(
            &args.out.join("report.json"),
            &json!({
                "provenance": provenance("edit", args),
                "edits": spec,
                "inpainted_pixels": resp.inpainted_pixels,
                "report": resp.report,
            }),
        )?;
        let top = resp.report.first();
        Ok(Outcome {
            human: match top {
                Some(r) => format!(
                    "top class {}: {:.2}% -> {:.2}% ({:+.2} points); wrote {}",
                    r.class_name,
                    r.original_pct,
                    r.edited_pct,
                    r.delta,
                    args.out.display()
                ),
                None => format!("wrote {}", args.out.display()),
            },
            json: json!({ "out": args.out, "report": resp.report }),
        })
    })
}

pub fn segment(server: Option<&str>, args: &SegmentArgs) -> CliResult<Outcome> {
    let image = read_file(&args.image)?;
    ensure_dir(&args.out)?;
    with_client(server, |client| async move {
        // segmentation needs no model; a zero linear classifier fills the slot
        let probe = regionlime_core::image::decode_image(&image)?;
        let dims = regionlime_core::predictor::InputDims::new(probe.height(), probe.width(), probe.channels());
        let spec = regionlime_core::predictor::PredictorSpec::zero_linear(dims, 2);
        let id = client.create_session(&image, Some(spec)).await?.session_id;
        let seg = prepare(&client, &id, &args.seg, args.seed).await?;
        write_b64(&args.out.join("labels.png"), &seg.labels_png)?;
        write_json(
            &args.out.join("segmentation.json"),
            &json!({
                "provenance": provenance("segment", args),
                "inner_k": seg.inner_k,
                "outer_k": seg.outer_k,
                "superpixels": seg.superpixels,
            }),
        )?;
        Ok(Outcome {
            human: format!(
                "{} superpixels ({} inside, {} outside); wrote {}",
                seg.superpixels.num_superpixels(),
                seg.inner_k,
                seg.outer_k,
                args.out.display()
            ),
            json: json!({ "out": args.out, "inner_k": seg.inner_k, "outer_k": seg.outer_k }),
        })
    })
}
