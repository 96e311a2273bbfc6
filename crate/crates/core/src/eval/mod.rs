//! Interpretability analyses over a trained model.

mod convergence;
mod curves;
mod export;
mod importance;
mod localize;

pub use convergence::{convergence_metrics, planted_recovery, separation, ConvergenceSeries};
pub use curves::{
    c_deletion_curve, c_insertion_curve, importance_order, masked_logits, random_baseline_curves, trapezoid,
    BaselineCurves, CurveMode, CurveResult, MaskingContext,
};
pub use export::{
    baseline_csv, concept_snapshots_dataset, convergence_csv, curve_csv, format_sig6, write_json, write_text,
};
pub use importance::{activated_patches, concept_importance, ActivatedPatch, ImportanceReport, SampleImportance, ACTIVATION_THRESHOLD};
pub use localize::{localization_grid, GridCell, LocalizationGrid};
