use std::fs;

use imos::dataset::{load_dataset, read_image, read_mask, IncludeList, Sample};
use imos::evaluation::{
    evaluate_dataset, CategoryMap, ErodedOraclePredictor, EvalOptions, OraclePredictor, PredictError, Predictor,
};
use imos::frame::Frame;
use imos::segmentation::BinaryMask;
use imos::thinking;

use crate::backends::{segmenter, ReasonerFactory};
use crate::config::{PredictorKind, RunConfig};
use crate::error::{exit, io_error, CliError};
use crate::output::Outputs;

pub(crate) const REPORT_JSON: &str = "report.json";
pub(crate) const REPORT_TABLE: &str = "report.txt";
pub(crate) const REPORT_CSV: &str = "report.csv";

/// Samples named by the configured dataset root, layout and include list.
pub(crate) fn load_samples(config: &RunConfig) -> Result<Vec<Sample>, CliError> {
    let root = config
        .data
        .root
        .as_ref()
        .ok_or_else(|| CliError::Usage("no dataset (pass --dataset or set data.root)".into()))?;
    let include = config.data.include.as_deref().map(IncludeList::read).transpose()?;
    Ok(load_dataset(root, config.data.layout, include.as_ref())?)
}

fn categories(config: &RunConfig) -> Result<Option<CategoryMap>, CliError> {
    let mut map = config.data.categories.clone();
    if let Some(path) = &config.data.categories_file {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let extra: CategoryMap = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: expected a JSON object of strings: {e}", path.display())))?;
        map.extend(extra);
    }
    Ok((!map.is_empty()).then_some(map))
}

pub(crate) fn run(config: &RunConfig) -> Result<u8, CliError> {
    let samples = load_samples(config)?;
    if samples.is_empty() {
        return Err(CliError::Usage("dataset contains no images".into()));
    }
    let grouping = categories(config)?;
    let options = EvalOptions {
        f_variant: config.evaluation.f_variant,
        tolerance_px: config.evaluation.tolerance_px,
    };

    let report = match config.evaluation.predictor {
        PredictorKind::Oracle => evaluate_dataset(&samples, &OraclePredictor, grouping.as_ref(), options)?,
        PredictorKind::ErodedOracle => evaluate_dataset(&samples, &ErodedOraclePredictor, grouping.as_ref(), options)?,
        PredictorKind::Loop => {
            let factory = ReasonerFactory::new(config)?;
            let model = segmenter(config, || {
                samples
                    .iter()
                    .filter_map(|s| s.mask_path.as_ref().map(|p| (s, p)))
                    .map(|(s, p)| Ok((s.image_id.clone(), read_mask(p)?)))
                    .collect()
            })?;
            let predictor = |s: &Sample| -> Result<BinaryMask, PredictError> {
                let frame = Frame::new(s.image_id.clone(), read_image(&s.image_path)?);
                let mut reasoner = factory.make()?;
                Ok(thinking::run(&frame, &mut reasoner, &model, &config.loop_config)?.mask)
            };
            evaluate_dataset(&samples, &predictor as &dyn Predictor, grouping.as_ref(), options)?
        }
    };

    let table = report.to_table();
    let mut out = Outputs::default();
    out.add(REPORT_JSON, report.to_json());
    out.add(REPORT_TABLE, table.clone());
    if config.evaluation.csv {
        out.add(REPORT_CSV, report.to_csv());
    }
    out.commit(config)?;
    print!("{table}");
    Ok(exit::OK)
}
