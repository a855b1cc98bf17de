use std::fs;
use std::path::Path;

use log::info;
use meshstyle::checkpoint::CheckpointError;
use meshstyle::dataset::{make_manifest, DatasetConfig, PairIndex};
use meshstyle::evaluation::ablation_table;
use meshstyle::mesh::{load_mesh, save_mesh};
use meshstyle::{
    evaluate, load_checkpoint, Dataset, Mesh, MetricReport, Scalar, ShapeStyleModel, Split,
    TrainConfig, Trainer,
};
use serde_json::json;

use crate::args::*;
use crate::config::{load_train_config, output_dir};
use crate::error::{io, Failure};

fn print_config(value: &serde_json::Value) {
    println!("resolved config:");
    println!("{}", serde_json::to_string_pretty(value).expect("json values serialize"));
}

fn splits(arg: SplitArg) -> Vec<Split> {
    match arg {
        SplitArg::Train => vec![Split::Train],
        SplitArg::Validation => vec![Split::Validation],
        SplitArg::Both => vec![Split::Train, Split::Validation],
    }
}

fn print_report(r: &MetricReport) {
    println!(
        "{:<10} pairs {:>4}  hausdorff {:.6} m  rmsd {:.6} m",
        r.split.to_string(),
        r.records.len(),
        r.hausdorff_mean,
        r.rmsd_mean
    );
}

/// Loads a checkpoint's model in whichever precision it was saved.
enum AnyModel {
    F32(ShapeStyleModel<f32>),
    F64(ShapeStyleModel<f64>),
}

fn load_model(path: &Path) -> Result<AnyModel, Failure> {
    match load_checkpoint::<f32>(path) {
        Ok(c) => Ok(AnyModel::F32(c.model)),
        Err(CheckpointError::Dtype { .. }) => Ok(AnyModel::F64(load_checkpoint::<f64>(path)?.model)),
        Err(e) => Err(e.into()),
    }
}

impl AnyModel {
    fn dtype(&self) -> &'static str {
        match self {
            AnyModel::F32(_) => "f32",
            AnyModel::F64(_) => "f64",
        }
    }
}

pub fn gen_data(a: GenDataArgs) -> Result<(), Failure> {
    let mut config = match &a.config {
        Some(p) => DatasetConfig::from_text(&fs::read_to_string(p).map_err(io(p))?)?,
        None => DatasetConfig::default(),
    };
    if let Some(v) = a.shapes {
        config.num_shapes = v;
    }
    if let Some(v) = a.poses {
        config.num_poses = v;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.split {
        config.split_fraction = v;
    }
    if let Some(v) = a.resolution {
        config.resolution = v;
    }
    let out = output_dir(a.out.as_deref(), "data");
    print_config(&json!({ "command": "gen-data", "dataset": &config, "out": out }));
    config.validate()?;
    let manifest = make_manifest(config)?;
    let data: Dataset<f64> = Dataset::generate(manifest)?;
    data.save(&out)?;
    let m = data.manifest();
    println!(
        "wrote {} bodies ({} vertices, template {}) to {}; {} validation bodies, held-out shapes {:?}",
        m.bodies.len(),
        m.num_vertices,
        m.template_id,
        out.display(),
        m.cells(Split::Validation).len(),
        m.held_out_shapes()
    );
    Ok(())
}

fn train_typed<T: Scalar>(a: &TrainArgs, config: TrainConfig) -> Result<(), Failure> {
    let data: Dataset<T> = Dataset::load(&a.data)?;
    let out = output_dir(a.out.as_deref(), "run");
    let mut trainer = match &a.resume {
        Some(p) => {
            let mut t = Trainer::resume(p, &data)?;
            if let Some(steps) = a.overrides.steps {
                t.config.steps = steps;
            }
            t
        }
        None => Trainer::new(config, &data)?,
    };
    print_config(&json!({
        "command": "train",
        "data": a.data,
        "out": out,
        "resume": a.resume,
        "resume_step": trainer.step(),
        "precision": T::DTYPE,
        "train": &trainer.config,
    }));
    let reports = trainer.fit(&data, Some(&out))?;
    if let Some(last) = reports.last() {
        println!(
            "step {}: total {:.6} rec {:.6} edge {:.6} dist {:.6} adver {:.6} disc {:.6}",
            trainer.step(),
            last.total,
            last.rec,
            last.edge,
            last.dist,
            last.adver,
            last.disc
        );
    }
    for split in [Split::Train, Split::Validation] {
        print_report(&evaluate(&trainer.model, &data, split)?);
    }
    println!("run written to {}", out.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    if a.resume.is_some() && (a.config.is_some() || !a.overrides.is_empty()) {
        return Err(Failure::usage(
            "--resume continues the stored configuration; only --steps may be given with it",
        ));
    }
    let base = match &a.config {
        Some(p) => load_train_config(p)?,
        None => TrainConfig::default(),
    };
    let config = a.overrides.apply(base);
    match a.precision {
        Precision::F32 => train_typed::<f32>(&a, config),
        Precision::F64 => train_typed::<f64>(&a, config),
    }
}

fn transfer_typed<T: Scalar>(model: &ShapeStyleModel<T>, a: &TransferArgs) -> Result<(), Failure> {
    let posed: Mesh<T> = load_mesh(&a.posed)?;
    let identity: Mesh<T> = load_mesh(&a.identity)?;
    if posed.num_vertices() != identity.num_vertices() {
        return Err(Failure::data(format!(
            "posed mesh has {} vertices but identity mesh has {}",
            posed.num_vertices(),
            identity.num_vertices()
        )));
    }
    let out = model.transfer(&posed, &identity)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    save_mesh(&out, &a.out)?;
    println!("wrote {} ({} vertices)", a.out.display(), out.num_vertices());
    Ok(())
}

pub fn transfer(a: TransferArgs) -> Result<(), Failure> {
    let model = load_model(&a.checkpoint)?;
    print_config(&json!({
        "command": "transfer",
        "checkpoint": a.checkpoint,
        "precision": model.dtype(),
        "posed": a.posed,
        "identity": a.identity,
        "out": a.out,
    }));
    match &model {
        AnyModel::F32(m) => transfer_typed(m, &a),
        AnyModel::F64(m) => transfer_typed(m, &a),
    }
}

fn eval_typed<T: Scalar>(model: &ShapeStyleModel<T>, a: &EvalArgs) -> Result<(), Failure> {
    let data: Dataset<T> = Dataset::load(&a.data)?;
    let mut csv = String::new();
    for split in splits(a.split) {
        let r = evaluate(model, &data, split)?;
        print_report(&r);
        csv.push_str(&r.to_csv());
    }
    if let Some(p) = &a.csv {
        fs::write(p, csv).map_err(io(p))?;
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let model = load_model(&a.checkpoint)?;
    print_config(&json!({
        "command": "eval",
        "checkpoint": a.checkpoint,
        "precision": model.dtype(),
        "data": a.data,
        "split": format!("{:?}", a.split).to_lowercase(),
        "csv": a.csv,
    }));
    match &model {
        AnyModel::F32(m) => eval_typed(m, &a),
        AnyModel::F64(m) => eval_typed(m, &a),
    }
}

pub fn ablate(a: AblateArgs) -> Result<(), Failure> {
    if a.name_a == a.name_b {
        return Err(Failure::usage("--name-a and --name-b must differ"));
    }
    let mut configs = vec![
        (a.name_a.clone(), load_train_config(&a.config_a)?),
        (a.name_b.clone(), load_train_config(&a.config_b)?),
    ];
    if let Some(steps) = a.steps {
        for (_, c) in &mut configs {
            c.steps = steps;
        }
    }
    let out = output_dir(a.out.as_deref(), "ablation");
    print_config(&json!({
        "command": "ablate",
        "data": a.data,
        "out": out,
        "configs": configs.iter().map(|(n, c)| json!({ "name": n, "train": c })).collect::<Vec<_>>(),
    }));
    let data: Dataset<f32> = Dataset::load(&a.data)?;
    let mut columns = Vec::new();
    for (name, config) in configs {
        info!("training configuration {name}");
        let mut trainer = Trainer::new(config, &data)?;
        trainer.fit(&data, Some(&out.join(&name)))?;
        let reports = [Split::Train, Split::Validation]
            .into_iter()
            .map(|s| evaluate(&trainer.model, &data, s))
            .collect::<Result<Vec<_>, _>>()?;
        columns.push((name, reports));
    }
    let table = ablation_table(&columns)?;
    print!("{}", table.to_text());
    let csv = out.join("ablation.csv");
    fs::write(&csv, table.to_csv()).map_err(io(&csv))?;
    Ok(())
}

fn pair_at(data: &Dataset<f64>, split: SplitArg, index: usize) -> Result<PairIndex, Failure> {
    let pairs: Vec<PairIndex> = splits(split).into_iter().flat_map(|s| data.eval_pairs(s)).collect();
    pairs.get(index).copied().ok_or_else(|| {
        Failure::usage(format!("pair index {index} out of range; the split has {} pairs", pairs.len()))
    })
}

pub fn export_pair(a: ExportPairArgs) -> Result<(), Failure> {
    let out = output_dir(a.out.as_deref(), "pair");
    print_config(&json!({
        "command": "export-pair",
        "data": a.data,
        "split": format!("{:?}", a.split).to_lowercase(),
        "index": a.index,
        "checkpoint": a.checkpoint,
        "out": out,
    }));
    let data: Dataset<f64> = Dataset::load(&a.data)?;
    let pair = pair_at(&data, a.split, a.index)?;
    fs::create_dir_all(&out).map_err(io(&out))?;
    for (name, cell) in [
        ("posed.obj", pair.posed),
        ("identity.obj", pair.identity),
        ("ground_truth.obj", pair.ground_truth),
    ] {
        save_mesh(data.mesh(cell), &out.join(name))?;
    }
    let (posed, identity) = (data.mesh(pair.posed), data.mesh(pair.identity));
    if let Some(ckpt) = &a.checkpoint {
        let result = match load_model(ckpt)? {
            AnyModel::F32(m) => m.transfer(&posed.cast(), &identity.cast())?.cast(),
            AnyModel::F64(m) => m.transfer(posed, identity)?,
        };
        save_mesh(&result, &out.join("transfer.obj"))?;
    }
    let meta = json!({
        "posed": pair.posed,
        "identity": pair.identity,
        "ground_truth": pair.ground_truth,
        "split": data.split(pair.ground_truth),
    });
    let meta_path = out.join("pair.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("json values serialize") + "\n")
        .map_err(io(&meta_path))?;
    println!(
        "pair posed {:?}, identity {:?}, ground truth {:?} written to {}",
        pair.posed,
        pair.identity,
        pair.ground_truth,
        out.display()
    );
    Ok(())
}
