//! Whole-trajectory prediction, per-horizon RMSE, error percentiles and bagging.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{compute_targets_from, scale_features, unscale_targets, HorizonSpec, ScalingSpec};
use crate::ingest::{FrameId, VehicleId};
use crate::neighborhood::{FeatureLayout, TrackFeatures};
use crate::neural::{model_forward, ModelParams, Tensor};

pub const PERCENTILES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("features have {found} columns but the model expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("vehicle {0} has no frame with a complete target")]
    NoValidFrames(VehicleId),
    #[error("nothing to aggregate")]
    Empty,
    #[error("ensemble members disagree: {0}")]
    IncompatibleEnsemble(String),
    #[error("prediction has {found} outputs, the horizon list needs {expected}")]
    OutputMismatch { expected: usize, found: usize },
}

/// RMSE per horizon, in meters (lateral position) and m/s (longitudinal speed).
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonErrors {
    pub horizons_s: Vec<u32>,
    pub lateral_rmse: Vec<f64>,
    pub long_speed_rmse: Vec<f64>,
}

/// Pooled signed errors (prediction − truth), per horizon.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignedErrors {
    pub lateral: Vec<Vec<f64>>,
    pub long_speed: Vec<Vec<f64>>,
}

impl SignedErrors {
    pub fn new(horizons: usize) -> Self {
        SignedErrors { lateral: vec![Vec::new(); horizons], long_speed: vec![Vec::new(); horizons] }
    }

    pub fn extend(&mut self, other: &SignedErrors) {
        for (a, b) in self.lateral.iter_mut().zip(&other.lateral) {
            a.extend(b);
        }
        for (a, b) in self.long_speed.iter_mut().zip(&other.long_speed) {
            a.extend(b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercentileRow {
    pub horizon_s: u32,
    /// `"lateral"` or `"long_speed"`.
    pub channel: &'static str,
    /// Values at [`PERCENTILES`].
    pub values: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleErrors {
    pub vehicle_id: VehicleId,
    pub start_frame: FrameId,
    pub errors: HorizonErrors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_vehicle: Vec<VehicleErrors>,
    /// Mean over vehicles of the per-vehicle RMSE.
    pub mean: HorizonErrors,
    pub percentiles: Vec<PercentileRow>,
}

/// One track prepared for evaluation: scaled network inputs and physical-unit truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrack {
    pub vehicle_id: VehicleId,
    pub start_frame: FrameId,
    /// `T × N` scaled features.
    pub features: Tensor,
    /// Unscaled `[x¹, vy¹, …]` per frame, `None` where a horizon runs past the track end.
    pub truth: Vec<Option<Vec<f64>>>,
}

impl EvalTrack {
    pub fn from_features(
        track: &TrackFeatures,
        layout: &FeatureLayout,
        scaling: &ScalingSpec,
        horizons: &HorizonSpec,
    ) -> EvalTrack {
        let rows: Vec<Vec<f64>> = track.frames.iter().map(|f| scale_features(f, scaling, layout)).collect();
        let x: Vec<f64> = track.frames.iter().map(|f| f.target.x).collect();
        let vy: Vec<f64> = track.frames.iter().map(|f| f.target.vy).collect();
        let truth = compute_targets_from(&x, &vy, horizons, scaling)
            .into_iter()
            .map(|t| t.map(|t| unscale_targets(&t, scaling)))
            .collect();
        let features = if rows.is_empty() {
            Tensor::zeros(&[0, layout.width()])
        } else {
            Tensor::from_rows(&rows).expect("uniform feature width")
        };
        EvalTrack { vehicle_id: track.vehicle_id, start_frame: track.frame_ids.first().copied().unwrap_or(0), features, truth }
    }
}

/// Feeds the whole trajectory in one scan (state carried across all frames) and
/// returns predictions in meters and m/s.
pub fn predict_full_track(params: &ModelParams, features: &Tensor, scaling: &ScalingSpec) -> Result<Tensor, EvalError> {
    let expected = params.config.input_size;
    if features.cols() != expected || features.shape().len() != 2 {
        return Err(EvalError::WidthMismatch { expected, found: features.cols() });
    }
    let (mut out, _) = model_forward(params, features, &params.initial_states())
        .map_err(|_| EvalError::WidthMismatch { expected, found: features.cols() })?;
    let cols = out.cols();
    for row in out.data_mut().chunks_exact_mut(cols) {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= scaling.target_divisor(j);
        }
    }
    Ok(out)
}

/// Models whose predictions are averaged.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<ModelParams>,
}

impl Ensemble {
    pub fn new(members: Vec<ModelParams>) -> Result<Self, EvalError> {
        let first = members.first().ok_or(EvalError::Empty)?;
        for m in &members[1..] {
            if m.config.output_size != first.config.output_size || m.config.input_size != first.config.input_size {
                return Err(EvalError::IncompatibleEnsemble(format!(
                    "{}→{} vs {}→{}",
                    first.config.input_size, first.config.output_size, m.config.input_size, m.config.output_size
                )));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[ModelParams] {
        &self.members
    }
}

/// Element-wise mean of the members' unscaled predictions.
pub fn bag_predict(ensemble: &Ensemble, features: &Tensor, scaling: &ScalingSpec) -> Result<Tensor, EvalError> {
    let mut sum: Option<Tensor> = None;
    for m in &ensemble.members {
        let p = predict_full_track(m, features, scaling)?;
        match sum.as_mut() {
            None => sum = Some(p),
            Some(s) => s.data_mut().iter_mut().zip(p.data()).for_each(|(a, b)| *a += b),
        }
    }
    let mut mean = sum.expect("ensemble is nonempty");
    let n = ensemble.members.len() as f64;
    mean.data_mut().iter_mut().for_each(|v| *v /= n);
    Ok(mean)
}

fn check_outputs(predictions: &Tensor, horizons: &HorizonSpec) -> Result<(), EvalError> {
    if predictions.cols() != horizons.output_size() {
        return Err(EvalError::OutputMismatch { expected: horizons.output_size(), found: predictions.cols() });
    }
    Ok(())
}

/// Signed errors of every frame that has a target.
pub fn signed_errors(
    predictions: &Tensor,
    truth: &[Option<Vec<f64>>],
    horizons: &HorizonSpec,
) -> Result<SignedErrors, EvalError> {
    check_outputs(predictions, horizons)?;
    let k = horizons.horizons_s.len();
    let mut out = SignedErrors::new(k);
    for (t, target) in truth.iter().enumerate().take(predictions.rows()) {
        if let Some(target) = target {
            let row = predictions.row(t);
            for h in 0..k {
                out.lateral[h].push(row[2 * h] - target[2 * h]);
                out.long_speed[h].push(row[2 * h + 1] - target[2 * h + 1]);
            }
        }
    }
    Ok(out)
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// RMSE per horizon over the frames that have a target.
pub fn rmse_per_vehicle(
    vehicle_id: VehicleId,
    predictions: &Tensor,
    truth: &[Option<Vec<f64>>],
    horizons: &HorizonSpec,
) -> Result<HorizonErrors, EvalError> {
    let errors = signed_errors(predictions, truth, horizons)?;
    if errors.lateral.first().is_none_or(Vec::is_empty) {
        return Err(EvalError::NoValidFrames(vehicle_id));
    }
    Ok(HorizonErrors {
        horizons_s: horizons.horizons_s.clone(),
        lateral_rmse: errors.lateral.iter().map(|e| rms(e)).collect(),
        long_speed_rmse: errors.long_speed.iter().map(|e| rms(e)).collect(),
    })
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

fn percentile_row(horizon_s: u32, channel: &'static str, samples: &[f64]) -> PercentileRow {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    PercentileRow { horizon_s, channel, values: PERCENTILES.map(|p| percentile(&sorted, p)) }
}

pub fn aggregate_report(per_vehicle: Vec<VehicleErrors>, pooled: &SignedErrors) -> Result<EvalReport, EvalError> {
    let first = per_vehicle.first().ok_or(EvalError::Empty)?;
    let horizons = first.errors.horizons_s.clone();
    let n = per_vehicle.len() as f64;
    let mean_of = |pick: fn(&HorizonErrors) -> &Vec<f64>| -> Vec<f64> {
        (0..horizons.len()).map(|h| per_vehicle.iter().map(|v| pick(&v.errors)[h]).sum::<f64>() / n).collect()
    };
    let mean = HorizonErrors {
        horizons_s: horizons.clone(),
        lateral_rmse: mean_of(|e| &e.lateral_rmse),
        long_speed_rmse: mean_of(|e| &e.long_speed_rmse),
    };
    let mut percentiles = Vec::new();
    for (h, &k) in horizons.iter().enumerate() {
        percentiles.push(percentile_row(k, "lateral", pooled.lateral.get(h).map_or(&[][..], Vec::as_slice)));
        percentiles.push(percentile_row(k, "long_speed", pooled.long_speed.get(h).map_or(&[][..], Vec::as_slice)));
    }
    Ok(EvalReport { per_vehicle, mean, percentiles })
}

/// Predicts every track with `predict` (in parallel, collected in track order) and
/// builds the report. Tracks without any complete target are skipped.
pub fn evaluate_tracks<F>(tracks: &[EvalTrack], horizons: &HorizonSpec, predict: F) -> Result<EvalReport, EvalError>
where
    F: Fn(&Tensor) -> Result<Tensor, EvalError> + Sync,
{
    let results: Vec<Option<(VehicleErrors, SignedErrors)>> = tracks
        .par_iter()
        .map(|track| {
            if track.truth.iter().all(Option::is_none) {
                return Ok(None);
            }
            let predictions = predict(&track.features)?;
            let errors = rmse_per_vehicle(track.vehicle_id, &predictions, &track.truth, horizons)?;
            let signed = signed_errors(&predictions, &track.truth, horizons)?;
            Ok(Some((VehicleErrors { vehicle_id: track.vehicle_id, start_frame: track.start_frame, errors }, signed)))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut per_vehicle = Vec::new();
    let mut pooled = SignedErrors::new(horizons.horizons_s.len());
    for (v, s) in results.into_iter().flatten() {
        per_vehicle.push(v);
        pooled.extend(&s);
    }
    aggregate_report(per_vehicle, &pooled)
}

/// Mean squared error per output column, pooled over all frames with a target.
pub fn pooled_mse(predictions: &[Tensor], tracks: &[EvalTrack]) -> Vec<f64> {
    let cols = predictions.first().map_or(0, Tensor::cols);
    let mut sum = vec![0.0; cols];
    let mut count = 0usize;
    for (p, track) in predictions.iter().zip(tracks) {
        for (t, target) in track.truth.iter().enumerate() {
            if let Some(target) = target {
                count += 1;
                for (j, (a, b)) in p.row(t).iter().zip(target).enumerate() {
                    sum[j] += (a - b) * (a - b);
                }
            }
        }
    }
    sum.iter().map(|s| s / count.max(1) as f64).collect()
}

pub fn write_rmse_csv<W: Write>(mut out: W, model: &str, report: &EvalReport) -> std::io::Result<()> {
    writeln!(out, "model,horizon,lateral_rmse_m,long_speed_rmse_mps")?;
    let m = &report.mean;
    for (h, k) in m.horizons_s.iter().enumerate() {
        writeln!(out, "{model},{k},{},{}", m.lateral_rmse[h], m.long_speed_rmse[h])?;
    }
    out.flush()
}

pub fn write_percentile_csv<W: Write>(mut out: W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(out, "horizon,channel,p5,p25,p50,p75,p95")?;
    for row in &report.percentiles {
        let v = row.values;
        writeln!(out, "{},{},{},{},{},{},{}", row.horizon_s, row.channel, v[0], v[1], v[2], v[3], v[4])?;
    }
    out.flush()
}

pub fn write_per_vehicle_csv<W: Write>(mut out: W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(out, "vehicle_id,start_frame,horizon,lateral_rmse_m,long_speed_rmse_mps")?;
    for v in &report.per_vehicle {
        for (h, k) in v.errors.horizons_s.iter().enumerate() {
            writeln!(
                out,
                "{},{},{k},{},{}",
                v.vehicle_id, v.start_frame, v.errors.lateral_rmse[h], v.errors.long_speed_rmse[h]
            )?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_params, ModelConfig, Variant};
    use proptest::prelude::*;

    fn one_horizon() -> HorizonSpec {
        HorizonSpec { horizons_s: vec![1] }
    }

    fn small_config() -> ModelConfig {
        Variant::Reference.config(20).scaled(8)
    }

    #[test]
    fn zero_model_predicts_zero() {
        let params = ModelParams::zeros(&small_config()).unwrap();
        let features = Tensor::from_vec(&[7, 49], (0..343).map(|i| i as f64 * 0.01).collect()).unwrap();
        let out = predict_full_track(&params, &features, &ScalingSpec::default()).unwrap();
        assert_eq!(out.shape(), &[7, 20]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_mismatch() {
        let params = ModelParams::zeros(&Variant::NoFf.config(20).scaled(8)).unwrap();
        let features = Tensor::zeros(&[3, 49]);
        assert_eq!(
            predict_full_track(&params, &features, &ScalingSpec::default()),
            Err(EvalError::WidthMismatch { expected: 44, found: 49 })
        );
    }

    #[test]
    fn predictions_are_unscaled() {
        let mut params = ModelParams::zeros(&small_config()).unwrap();
        params.output.bias.data_mut().iter_mut().for_each(|b| *b = 0.5);
        let features = Tensor::zeros(&[2, 49]);
        let scaling = ScalingSpec { distance_divisor: 10.0, long_velocity_divisor: 4.0, ..Default::default() };
        let out = predict_full_track(&params, &features, &scaling).unwrap();
        assert_eq!(&out.row(1)[..4], &[5.0, 2.0, 5.0, 2.0]);
        let back = crate::dataset::unscale_targets(&[0.5; 4], &scaling);
        assert_eq!(back, vec![5.0, 2.0, 5.0, 2.0]);
        assert!((out.row(0)[0] / 10.0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rmse_examples() {
        let h = one_horizon();
        let truth = vec![Some(vec![1.0, 2.0]), Some(vec![3.0, 4.0]), None];
        let exact = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![9.0, 9.0]]).unwrap();
        let e = rmse_per_vehicle(1, &exact, &truth, &h).unwrap();
        assert_eq!((e.lateral_rmse[0], e.long_speed_rmse[0]), (0.0, 0.0));
        let shifted = Tensor::from_rows(&[vec![2.0, 2.0], vec![4.0, 4.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(rmse_per_vehicle(1, &shifted, &truth, &h).unwrap().lateral_rmse[0], 1.0);
        let two = Tensor::from_rows(&[vec![4.0, 2.0], vec![7.0, 4.0], vec![0.0, 0.0]]).unwrap();
        let e = rmse_per_vehicle(1, &two, &truth, &h).unwrap();
        assert!((e.lateral_rmse[0] - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((e.lateral_rmse[0] - 3.5355).abs() < 1e-4);
        assert_eq!(rmse_per_vehicle(5, &two, &[None, None, None], &h), Err(EvalError::NoValidFrames(5)));
    }

    fn vehicle(id: VehicleId, lateral: f64) -> VehicleErrors {
        VehicleErrors {
            vehicle_id: id,
            start_frame: 1,
            errors: HorizonErrors { horizons_s: vec![1], lateral_rmse: vec![lateral], long_speed_rmse: vec![0.0] },
        }
    }

    #[test]
    fn aggregation() {
        let pooled = SignedErrors { lateral: vec![vec![0.1, -0.1]], long_speed: vec![vec![0.0]] };
        let one = aggregate_report(vec![vehicle(1, 0.5)], &pooled).unwrap();
        assert_eq!(one.mean, one.per_vehicle[0].errors);
        let two = aggregate_report(vec![vehicle(1, 0.5), vehicle(2, 0.9)], &pooled).unwrap();
        assert!((two.mean.lateral_rmse[0] - 0.7).abs() < 1e-12);
        assert_eq!(aggregate_report(vec![], &pooled), Err(EvalError::Empty));
    }

    #[test]
    fn percentile_interpolation() {
        let sorted: Vec<f64> = (0..=100).map(f64::from).collect();
        for p in PERCENTILES {
            assert!((percentile(&sorted, p) - p).abs() < 1e-12);
        }
        assert_eq!(percentile(&[1.0, 3.0], 50.0), 2.0);
        assert_eq!(percentile(&[4.0], 95.0), 4.0);
    }

    #[test]
    fn bagging_examples() {
        let config = small_config();
        let a = init_params(&config, 1).unwrap();
        let features = Tensor::from_vec(&[6, 49], (0..294).map(|i| ((i * 7) % 13) as f64 * 0.05).collect()).unwrap();
        let scaling = ScalingSpec::default();
        let single = predict_full_track(&a, &features, &scaling).unwrap();
        assert_eq!(bag_predict(&Ensemble::new(vec![a.clone()]).unwrap(), &features, &scaling).unwrap(), single);
        let four = Ensemble::new(vec![a.clone(), a.clone(), a.clone(), a.clone()]).unwrap();
        let bagged = bag_predict(&four, &features, &scaling).unwrap();
        assert!(bagged.max_abs_diff(&single) < 1e-12);

        let mut one = ModelParams::zeros(&config).unwrap();
        let mut three = one.clone();
        one.output.bias.fill(0.1);
        three.output.bias.fill(0.3);
        let bagged = bag_predict(&Ensemble::new(vec![one, three]).unwrap(), &features, &scaling).unwrap();
        // distance divisor 10: outputs 1.0 and 3.0 m
        assert!((bagged.row(0)[0] - 2.0).abs() < 1e-12);

        let other = ModelParams::zeros(&Variant::Reference.config(6).scaled(8)).unwrap();
        assert!(matches!(Ensemble::new(vec![a, other]), Err(EvalError::IncompatibleEnsemble(_))));
        assert!(matches!(Ensemble::new(vec![]), Err(EvalError::Empty)));
    }

    #[test]
    fn csv_layouts() {
        let pooled = SignedErrors { lateral: vec![vec![0.1, -0.1]], long_speed: vec![vec![0.0]] };
        let report = aggregate_report(vec![vehicle(3, 0.25)], &pooled).unwrap();
        let mut buf = Vec::new();
        write_rmse_csv(&mut buf, "reference", &report).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "model,horizon,lateral_rmse_m,long_speed_rmse_mps\nreference,1,0.25,0\n");
        let mut buf = Vec::new();
        write_percentile_csv(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("horizon,channel,p5,p25,p50,p75,p95\n1,lateral,"));
        assert_eq!(text.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn rmse_ignores_frame_order(values in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0), 1..30), seed in any::<u64>()) {
            let h = one_horizon();
            let preds: Vec<Vec<f64>> = values.iter().map(|v| vec![v.0, v.1]).collect();
            let truth: Vec<Option<Vec<f64>>> = values.iter().map(|v| Some(vec![v.2, v.3])).collect();
            let mut order: Vec<usize> = (0..values.len()).collect();
            use rand::{seq::SliceRandom, SeedableRng};
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = rmse_per_vehicle(1, &Tensor::from_rows(&preds).unwrap(), &truth, &h).unwrap();
            let p2: Vec<Vec<f64>> = order.iter().map(|&i| preds[i].clone()).collect();
            let t2: Vec<Option<Vec<f64>>> = order.iter().map(|&i| truth[i].clone()).collect();
            let b = rmse_per_vehicle(1, &Tensor::from_rows(&p2).unwrap(), &t2, &h).unwrap();
            prop_assert!((a.lateral_rmse[0] - b.lateral_rmse[0]).abs() < 1e-12);
            prop_assert!((a.long_speed_rmse[0] - b.long_speed_rmse[0]).abs() < 1e-12);
        }

        #[test]
        fn percentiles_are_monotone(samples in proptest::collection::vec(-100.0f64..100.0, 1..200)) {
            let row = percentile_row(1, "lateral", &samples);
            prop_assert!(row.values.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn bagged_mse_obeys_jensen(members in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 8), 2..5), truth in proptest::collection::vec(-3.0f64..3.0, 8)) {
            let track = EvalTrack {
                vehicle_id: 1,
                start_frame: 1,
                features: Tensor::zeros(&[4, 1]),
                truth: truth.chunks(2).map(|c| Some(c.to_vec())).collect(),
            };
            let preds: Vec<Tensor> = members.iter().map(|m| Tensor::from_vec(&[4, 2], m.clone()).unwrap()).collect();
            let mut mean = Tensor::zeros(&[4, 2]);
            for p in &preds {
                mean.data_mut().iter_mut().zip(p.data()).for_each(|(a, b)| *a += b / preds.len() as f64);
            }
            let bagged = pooled_mse(&[mean], std::slice::from_ref(&track));
            let member_mean: Vec<f64> = (0..2)
                .map(|j| preds.iter().map(|p| pooled_mse(std::slice::from_ref(p), std::slice::from_ref(&track))[j]).sum::<f64>() / preds.len() as f64)
                .collect();
            for j in 0..2 {
                prop_assert!(bagged[j] <= member_mean[j] + 1e-12);
            }
        }
    }
}
