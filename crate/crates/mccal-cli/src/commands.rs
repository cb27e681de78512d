//! Subcommand implementations. Every command returns the process exit code
//! it wants on success; failures bubble up as library errors and are mapped
//! to exit codes at the top level.

use std::fs;
use std::path::PathBuf;

use mccal::binning::{reliability_table, BinningAxis};
use mccal::io::{
    self, CalibrationReport, RejectionDoc, ReliabilityDoc, ReportConfigEcho, TemperatureFile,
    REPORT_FORMAT_VERSION,
};
use mccal::prob::LogitSampleSet;
use mccal::rejection::{default_thresholds, reject_sweep};
use mccal::tempfit::{fit_temperature, FitConfig};
use mccal::toynet::{train, BlobConfig, SyntheticDataset, ToyNet, TrainConfig};
use mccal::{Error, Result};

use crate::args::{
    Axis, Command, DemoArgs, EvaluateArgs, FitArgs, OracleArgs, OutputFormat, RejectArgs,
    ReliabilityArgs,
};
use crate::oracle;

pub fn run(command: &Command) -> Result<i32> {
    match command {
        Command::Demo(args) => demo(args),
        Command::Fit(args) => fit(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Reliability(args) => reliability(args),
        Command::Reject(args) => reject(args),
        Command::Oracle(args) => run_oracle(args),
    }
}

/// Purpose-specific seeds derived from the master seed. The offsets are
/// spaced so per-input increments can never cross purposes.
fn derived_seed(seed: u64, purpose: u64) -> u64 {
    seed.wrapping_add(purpose << 40)
}

fn dump_sets(
    net: &ToyNet,
    data: &SyntheticDataset,
    passes: usize,
    seed: u64,
) -> Result<Vec<LogitSampleSet>> {
    data.inputs()
        .iter()
        .zip(data.labels())
        .enumerate()
        .map(|(i, (x, &y))| net.mc_predict(x, y, passes, seed.wrapping_add(i as u64)))
        .collect()
}

fn demo(args: &DemoArgs) -> Result<i32> {
    let blob = |n: usize, purpose: u64| -> Result<SyntheticDataset> {
        SyntheticDataset::generate(&BlobConfig {
            n,
            input_dim: args.dims,
            classes: args.classes,
            spread: args.sigma,
            seed: derived_seed(args.seed, purpose),
        })
    };
    let train_data = blob(args.train_n, 0)?;
    let val_data = blob(args.val_n, 1)?;
    let test_data = blob(args.test_n, 2)?;

    let net = ToyNet::new(
        args.dims,
        args.hidden,
        args.classes,
        0.5,
        derived_seed(args.seed, 3),
    )?;
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        cp_beta: args.beta,
        seed: derived_seed(args.seed, 4),
    };
    let net = train(net, &train_data, &cfg)?;
    println!(
        "trained {}x{}x{} net: train accuracy {:.4}, train nll {:.4}",
        args.dims,
        args.hidden,
        args.classes,
        net.accuracy_deterministic(&train_data)?,
        net.mean_nll_deterministic(&train_data)?,
    );

    fs::create_dir_all(&args.out_dir)?;
    let val_sets = dump_sets(&net, &val_data, args.passes, derived_seed(args.seed, 5))?;
    let val_path = args.out_dir.join("val.jsonl");
    io::write_logit_dump(&val_path, &io::records_from_sets(&val_sets, "val"))?;
    println!(
        "wrote {} ({} records, {} passes, {} classes)",
        val_path.display(),
        val_sets.len(),
        args.passes,
        args.classes
    );

    let test_sets = dump_sets(&net, &test_data, args.passes, derived_seed(args.seed, 6))?;
    let test_path = args.out_dir.join("test.jsonl");
    io::write_logit_dump(&test_path, &io::records_from_sets(&test_sets, "test"))?;
    println!(
        "wrote {} ({} records, {} passes, {} classes)",
        test_path.display(),
        test_sets.len(),
        args.passes,
        args.classes
    );

    if let Some(model_out) = &args.model_out {
        io::write_checkpoint(model_out, &net)?;
        println!("wrote {}", model_out.display());
    }
    Ok(0)
}

fn fit(args: &FitArgs) -> Result<i32> {
    let sets = io::read_logit_dump(&args.input)?;
    let cfg = FitConfig {
        t_min: args.t_min,
        t_max: args.t_max,
        ..FitConfig::default()
    };
    let param = fit_temperature(&sets, &cfg)?;
    io::write_temperature(&args.output, &TemperatureFile::new(&param, &cfg))?;
    println!(
        "fitted temperature {:.4} (validation nll {:.4} over {} records, {} evaluations)",
        param.t,
        param.fit_nll,
        sets.len(),
        param.fit_iterations
    );
    println!("wrote {}", args.output.display());
    Ok(0)
}

fn resolve_temperature(value: Option<f64>, file: Option<&PathBuf>) -> Result<f64> {
    match (value, file) {
        (Some(t), _) => {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::InvalidTemperature(t));
            }
            Ok(t)
        }
        (None, Some(path)) => Ok(io::read_temperature(path)?.temperature),
        (None, None) => Err(Error::InvalidConfig(
            "a temperature is required: pass --temperature or --temperature-file".into(),
        )),
    }
}

fn evaluate(args: &EvaluateArgs) -> Result<i32> {
    let sets = io::read_logit_dump(&args.input)?;
    let temperature = resolve_temperature(args.temperature, args.temperature_file.as_ref())?;
    let echo = ReportConfigEcho {
        input: args.input.display().to_string(),
        bins: args.bins,
        temperature,
    };
    let report = CalibrationReport::compute(&sets, temperature, args.bins, echo)?;
    io::write_report(&args.output, &report)?;
    println!(
        "n={} passes={} bins={} T={:.4}",
        report.n, report.n_passes, report.m_bins, report.temperature
    );
    println!(
        "ece {:.4} -> {:.4}",
        report.ece_uncalibrated, report.ece_calibrated
    );
    println!(
        "uce {:.4} -> {:.4}",
        report.uce_uncalibrated, report.uce_calibrated
    );
    println!(
        "nll {:.4} -> {:.4}",
        report.nll_uncalibrated, report.nll_calibrated
    );
    println!("wrote {}", args.output.display());
    Ok(0)
}

fn to_binning_axis(axis: Axis) -> BinningAxis {
    match axis {
        Axis::Confidence => BinningAxis::Confidence,
        Axis::Uncertainty => BinningAxis::Uncertainty,
    }
}

fn reliability(args: &ReliabilityArgs) -> Result<i32> {
    let sets = io::read_logit_dump(&args.input)?;
    let temperature = resolve_temperature(args.temperature, args.temperature_file.as_ref())?;
    let axis = to_binning_axis(args.axis);
    let uncalibrated = reliability_table(
        &CalibrationReport::score_records(&sets, 1.0)?,
        args.bins,
        axis,
    )?;
    let calibrated = reliability_table(
        &CalibrationReport::score_records(&sets, temperature)?,
        args.bins,
        axis,
    )?;
    match args.format {
        OutputFormat::Csv => {
            io::write_reliability_csv(&args.output, &[(false, &uncalibrated), (true, &calibrated)])?
        }
        OutputFormat::Json => io::write_reliability_json(
            &args.output,
            &ReliabilityDoc {
                format_version: REPORT_FORMAT_VERSION,
                axis,
                temperature,
                uncalibrated,
                calibrated,
            },
        )?,
    }
    println!("wrote {}", args.output.display());
    Ok(0)
}

fn reject(args: &RejectArgs) -> Result<i32> {
    let sets = io::read_logit_dump(&args.input)?;
    let thresholds = default_thresholds();
    let uncalibrated = reject_sweep(&CalibrationReport::score_records(&sets, 1.0)?, &thresholds)?;
    let temperature = match (args.temperature, args.temperature_file.as_ref()) {
        (None, None) => None,
        (value, file) => Some(resolve_temperature(value, file)?),
    };
    let calibrated = temperature
        .map(|t| -> Result<_> {
            reject_sweep(&CalibrationReport::score_records(&sets, t)?, &thresholds)
        })
        .transpose()?;
    match args.format {
        OutputFormat::Csv => {
            let mut curves = vec![(false, &uncalibrated)];
            if let Some(curve) = &calibrated {
                curves.push((true, curve));
            }
            io::write_rejection_csv(&args.output, &curves)?;
        }
        OutputFormat::Json => io::write_rejection_json(
            &args.output,
            &RejectionDoc {
                format_version: REPORT_FORMAT_VERSION,
                temperature,
                uncalibrated,
                calibrated,
            },
        )?,
    }
    println!("wrote {}", args.output.display());
    Ok(0)
}

fn run_oracle(args: &OracleArgs) -> Result<i32> {
    let outcome = oracle::run_checks(args.seed, args.instances, args.max_n)?;
    println!(
        "binning oracle: {} randomized instances checked for bitwise ECE/UCE equality",
        outcome.binning_instances
    );
    println!(
        "integration oracle: {} sample sets checked against the naive loop",
        outcome.integration_sets
    );
    println!(
        "nll oracle: {} batches checked against naive summation",
        outcome.nll_batches
    );
    if outcome.mismatches.is_empty() {
        println!("all oracle checks passed");
        Ok(0)
    } else {
        for mismatch in &outcome.mismatches {
            eprintln!("mismatch: {mismatch}");
        }
        eprintln!("{} oracle mismatches", outcome.mismatches.len());
        Ok(1)
    }
}
