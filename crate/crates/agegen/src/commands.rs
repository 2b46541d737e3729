//! Subcommand implementations. Each returns once every output is on disk;
//! progress lines go to `out`, errors are returned to `main`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use agegen_core::evaluation::{evaluate, GroundTruthItem, SubjectEvaluation};
use agegen_core::metrics::{dsc, ranking_value};
use agegen_core::phantom::make_phantom;
use agegen_core::pipeline::{
    plan_generation, run_subject, AgedFrame, PipelineParams, SubjectPair, SubjectRun, VelocitySource,
};
use agegen_core::registration::{estimate_svf, DemonsParams};
use agegen_core::svf::{exp_field, IntegrationParams};
use agegen_core::volume::{normalize_intensity, warp, Interpolation, Volume};
use agegen_core::MetricId;

use crate::cli::{Cli, Command, DemonsOverrides, EvaluateArgs, ExpArgs, GenerateArgs, MetricsArgs, PhantomArgs, RegisterArgs};
use crate::config::{parse_stopping, stopping_name, RunConfig, SourceKind, SubjectConfig};
use crate::error::{AppError, Result};
use crate::listing::{read_listing, write_listing, ListingEntry};
use crate::manifest::{self, frame_file, labels_file, Manifest, ManifestInfo};
use crate::{curves, io, report};

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Register(a) => register(&a, out),
        Command::Generate(a) => generate(&a, out),
        Command::Evaluate(a) => evaluate_cmd(&a, out),
        Command::Phantom(a) => phantom(&a, out),
        Command::Metrics(a) => metrics(&a, out),
        Command::Exp(a) => exp(&a, out),
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) {
    // Progress output is best effort; a closed stdout must not fail the run.
    let _ = writeln!(out, "{line}");
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::from_file)
}

fn prepare(vol: Volume, normalize: bool) -> Result<Volume> {
    if normalize {
        Ok(normalize_intensity(&vol)?)
    } else {
        Ok(vol)
    }
}

fn demons_params(o: &DemonsOverrides) -> Result<(DemonsParams, bool)> {
    let cfg = load_config(o.config.as_deref())?;
    let d = cfg.demons;
    let p = DemonsParams {
        iterations: o.iterations.unwrap_or(d.iterations),
        multiresolution_levels: o.levels.unwrap_or(d.multiresolution_levels),
        step_scale: o.step_scale.unwrap_or(d.step_scale),
        update_smoothing_sigma: o.update_sigma.unwrap_or(d.update_smoothing_sigma),
        field_smoothing_sigma: o.field_sigma.unwrap_or(d.field_smoothing_sigma),
    };
    p.validate()?;
    Ok((p, o.normalize || cfg.normalize))
}

pub fn register(a: &RegisterArgs, out: &mut dyn Write) -> Result<()> {
    let (params, normalize) = demons_params(&a.demons)?;
    let moving = prepare(io::read_volume(&a.moving)?, normalize)?;
    let fixed = prepare(io::read_volume(&a.fixed)?, normalize)?;
    let v = estimate_svf(&moving, &fixed, &params)?;
    io::write_field(&a.out, &v)?;
    say(out, format_args!("wrote {} (max |v| = {:.4})", a.out.display(), v.max_norm()));
    Ok(())
}

/// One subject's outcome, for the summary lines.
pub struct SubjectSummary {
    pub id: String,
    pub adjusted_s: f64,
    pub frames: usize,
    pub dir: PathBuf,
}

fn load_pair(cfg: &RunConfig, s: &SubjectConfig) -> Result<SubjectPair> {
    let moving = prepare(io::read_volume(&s.moving)?, cfg.normalize)?;
    let fixed = prepare(io::read_volume(&s.fixed)?, cfg.normalize)?;
    let lm = s.labels_moving.as_deref().map(io::read_labels).transpose()?;
    let lf = s.labels_fixed.as_deref().map(io::read_labels).transpose()?;
    Ok(SubjectPair::new(s.id.clone(), moving, s.age_moving, fixed, s.age_fixed)?.with_labels(lm, lf)?)
}

fn write_run(dir: &Path, run: &SubjectRun, m: &Manifest) -> Result<()> {
    create_dir(dir)?;
    for f in &run.frames {
        io::write_volume(&dir.join(frame_file(f.index)), &f.image)?;
        if let Some(l) = &f.labels {
            io::write_labels(&dir.join(labels_file(f.index)), l)?;
        }
    }
    curves::write_curves(&dir.join("curves.csv"), &run.curves)?;
    // Written last: a manifest on disk means the frame set is complete.
    m.write(&dir.join(manifest::FILE_NAME))
}

pub fn generate_subject(cfg: &RunConfig, s: &SubjectConfig, out_dir: &Path) -> Result<SubjectSummary> {
    let pair = load_pair(cfg, s)?;
    let plan = plan_generation(&pair, cfg.initial_s)?;
    let source = match cfg.velocity_source {
        SourceKind::Demons => VelocitySource::Demons(cfg.demons),
        SourceKind::File => {
            let path = s.velocity.as_deref().expect("validated config");
            VelocitySource::Field(io::load_velocity_field(path, Some(&pair.moving))?)
        }
    };
    let params = PipelineParams {
        integration: cfg.integration,
        stopping: cfg.stopping,
    };
    let run = run_subject(&pair, &plan, &source, &params)?;
    let info = ManifestInfo {
        subject: &s.id,
        tag: &s.tag,
        age_moving: s.age_moving,
        age_fixed: s.age_fixed,
        plan: &plan,
        steps_per_unit: cfg.integration.steps_per_unit,
        stopping: stopping_name(cfg.stopping),
        config_hash: &cfg.hash,
    };
    let dir = out_dir.join(&s.id);
    write_run(&dir, &run, &Manifest::new(&info, &run))?;
    Ok(SubjectSummary {
        id: s.id.clone(),
        adjusted_s: run.adjusted_s,
        frames: run.frames.len(),
        dir,
    })
}

/// Runs every subject with at most `jobs` in flight. Results keep config order.
pub fn generate_all(cfg: &RunConfig, out_dir: &Path, jobs: usize) -> Vec<Result<SubjectSummary>> {
    let n = cfg.subjects.len();
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<SubjectSummary>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = generate_subject(cfg, &cfg.subjects[i], out_dir);
                *slots[i].lock().expect("no panics while holding the slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("worker finished").expect("every slot filled"))
        .collect()
}

pub fn generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::from_file(&a.config)?;
    if let Some(s) = a.initial_s {
        cfg.initial_s = s;
    }
    if let Some(k) = a.steps_per_unit {
        cfg.integration = IntegrationParams::euler(k);
    }
    if let Some(r) = &a.stopping {
        cfg.stopping = parse_stopping(r)?;
    }
    cfg.validate()?;
    if cfg.subjects.is_empty() {
        return Err(AppError::Usage(format!("{}: no [[subject]] entries", a.config.display())));
    }
    let out_dir = a
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| AppError::Usage("no output directory: pass --out or set output_dir".into()))?;
    create_dir(&out_dir)?;

    let mut first_err = None;
    for r in generate_all(&cfg, &out_dir, a.jobs as usize) {
        match r {
            Ok(s) => say(
                out,
                format_args!(
                    "{}: adjusted s = {:.6}, {} frames -> {}",
                    s.id,
                    s.adjusted_s,
                    s.frames,
                    s.dir.display()
                ),
            ),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn load_ground_truth(e: &ListingEntry, fallback_tag: &str) -> Result<GroundTruthItem> {
    let tag = if !e.tag.is_empty() {
        e.tag.clone()
    } else if !fallback_tag.is_empty() {
        fallback_tag.to_string()
    } else {
        "untagged".to_string()
    };
    Ok(GroundTruthItem {
        image: io::read_volume(&e.path)?,
        true_age: e.true_age,
        labels: e.labels.as_deref().map(io::read_labels).transpose()?,
        tag,
    })
}

pub fn evaluate_cmd(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let listing = read_listing(&a.ground_truth)?;
    let mut subjects: Vec<(Manifest, Vec<AgedFrame>, Vec<GroundTruthItem>)> = Vec::new();
    for path in &a.manifest {
        let m = Manifest::read(path)?;
        if subjects.iter().any(|(o, _, _)| o.subject == m.subject) {
            return Err(AppError::Usage(format!("subject `{}` given twice", m.subject)));
        }
        let inside = |age: f64| age > m.age_moving && age < m.age_fixed;
        let mut gt = Vec::new();
        for e in listing.iter().filter(|e| e.applies_to(&m.subject)) {
            if inside(e.true_age) {
                gt.push(load_ground_truth(e, &m.tag)?);
            } else if e.subject.as_deref() == Some(m.subject.as_str()) {
                return Err(AppError::Data(format!(
                    "{}: true age {} lies outside ({}, {}) for subject `{}`",
                    e.path.display(),
                    e.true_age,
                    m.age_moving,
                    m.age_fixed,
                    m.subject
                )));
            }
        }
        let frames = m.load_frames(path)?;
        subjects.push((m, frames, gt));
    }
    let inputs: Vec<SubjectEvaluation<'_>> = subjects
        .iter()
        .map(|(m, frames, gt)| SubjectEvaluation {
            subject: &m.subject,
            frames,
            ground_truth: gt,
        })
        .collect();
    let rep = evaluate(&inputs).map_err(|e| match e {
        agegen_core::Error::Empty { .. } => AppError::Data(format!(
            "{}: no ground-truth item lies strictly between a subject's two scan ages",
            a.ground_truth.display()
        )),
        e => e.into(),
    })?;
    report::write_report(&a.out, &rep)?;
    for m in &rep.metrics {
        match &m.regression {
            Some(r) => say(
                out,
                format_args!(
                    "{}: rmse = {:.4}, slope = {:.4}, r2 = {:.4}, corrected rmse = {:.4}",
                    m.metric, m.rmse, r.slope, r.r_squared, r.corrected_rmse
                ),
            ),
            None => say(out, format_args!("{}: rmse = {:.4}", m.metric, m.rmse)),
        }
    }
    say(out, format_args!("report written to {}", a.out.display()));
    Ok(())
}

pub const DEFAULT_PHANTOM_AGES: [f64; 5] = [60.0, 62.5, 65.0, 67.5, 70.0];

pub fn phantom_image_file(age: f64) -> String {
    format!("phantom_{age}.nii.gz")
}

pub fn phantom_labels_file(age: f64) -> String {
    format!("phantom_{age}_labels.nii.gz")
}

/// Writes one image/label pair per age, a ground-truth listing of the
/// interior ages and a `run.toml` pairing the youngest and oldest scans
/// under the config's demons settings.
pub fn phantom(a: &PhantomArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let mut section = cfg.phantom.clone();
    if let Some(seed) = a.seed {
        section.spec.seed = seed;
    }
    let mut ages = a.ages.clone().unwrap_or_else(|| {
        if section.ages.is_empty() {
            DEFAULT_PHANTOM_AGES.to_vec()
        } else {
            section.ages.clone()
        }
    });
    if ages.iter().any(|x| !x.is_finite()) {
        return Err(AppError::Usage("ages must be finite".into()));
    }
    ages.sort_by(f64::total_cmp);
    ages.dedup();
    section.spec.validate()?;
    // Check every age before writing anything.
    for &age in &ages {
        section.spec.check_cavity(age)?;
    }

    create_dir(&a.out)?;
    for &age in &ages {
        let (img, labels) = make_phantom(&section.spec, age)?;
        io::write_volume(&a.out.join(phantom_image_file(age)), &img)?;
        io::write_labels(&a.out.join(phantom_labels_file(age)), &labels)?;
    }
    say(out, format_args!("wrote {} phantom pairs to {}", ages.len(), a.out.display()));

    if let [first, .., last] = ages[..] {
        let interior: Vec<ListingEntry> = ages[1..ages.len() - 1]
            .iter()
            .map(|&age| ListingEntry {
                path: phantom_image_file(age).into(),
                true_age: age,
                tag: section.tag.clone(),
                labels: Some(phantom_labels_file(age).into()),
                subject: None,
            })
            .collect();
        if !interior.is_empty() {
            write_listing(&a.out.join("ground_truth.csv"), &interior)?;
        }
        let demons = toml::to_string(&cfg.demons).expect("demons params serialize");
        let run = format!(
            "output_dir = \"generated\"\n\n[demons]\n{demons}\n[[subject]]\nid = \"phantom\"\ntag = {tag:?}\n\
             moving = {m:?}\nage_moving = {first:?}\nlabels_moving = {lm:?}\n\
             fixed = {f:?}\nage_fixed = {last:?}\nlabels_fixed = {lf:?}\n",
            tag = section.tag,
            m = phantom_image_file(first),
            lm = phantom_labels_file(first),
            f = phantom_image_file(last),
            lf = phantom_labels_file(last),
        );
        let p = a.out.join("run.toml");
        fs::write(&p, run).map_err(|e| AppError::io(&p, e))?;
    }
    Ok(())
}

pub fn metrics(a: &MetricsArgs, out: &mut dyn Write) -> Result<()> {
    let va = io::read_volume(&a.a)?;
    let vb = io::read_volume(&a.b)?;
    va.dims().check_same(vb.dims())?;
    let range = a.range.unwrap_or(vb.dynamic_range() as f64);
    if !(range.is_finite() && range > 0.0) {
        return Err(AppError::Usage(format!("dynamic range must be positive, got {range}")));
    }
    for m in MetricId::INTENSITY {
        let v = ranking_value(m, &va, &vb, range)?;
        say(out, format_args!("{m} {}", curves::format_value(v)));
    }
    if let (Some(pa), Some(pb)) = (&a.labels_a, &a.labels_b) {
        let v = dsc(&io::read_labels(pa)?, &io::read_labels(pb)?, None)?;
        say(out, format_args!("{} {}", MetricId::Dsc, v.value));
    }
    Ok(())
}

pub fn exp(a: &ExpArgs, out: &mut dyn Write) -> Result<()> {
    let v = io::load_velocity_field(&a.velocity, None)?;
    let params = IntegrationParams::euler(a.steps_per_unit);
    let phi = exp_field(&v, a.t, &params)?;
    io::write_field(&a.out, &phi)?;
    say(out, format_args!("wrote {} (max |u| = {:.4})", a.out.display(), phi.max_norm()));
    if let (Some(img), Some(dst)) = (&a.image, &a.warped) {
        let warped = warp(&io::read_volume(img)?, &phi, Interpolation::Trilinear)?;
        io::write_volume(dst, &warped)?;
        say(out, format_args!("wrote {}", dst.display()));
    }
    Ok(())
}
