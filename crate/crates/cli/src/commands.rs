use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use igp::fusion::{self, FusionConfig, FusionMode};
use igp::hyperopt::{self, Bounds};
use igp::io::{self, ExtraColumn};
use igp::metrics::{self, Thresholds};
use igp::synthetic::{self, Boundary, Layout, Scenario};
use igp::{gp, KernelFamily, OptimConfig, PosteriorField, SupportSample};

use crate::artifact::{ModelFile, Provenance};
use crate::{ClassifyArgs, FitArgs, FuseArgs, OptimArgs, PredictArgs, ReproArgs, SynthArgs, ValidateArgs};

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').with_context(|| format!("expected lo:hi, got '{s}'"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

pub fn parse_bounds(spec: &str) -> Result<Bounds> {
    let mut b = Bounds::default();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').with_context(|| format!("expected key=lo:hi, got '{part}'"))?;
        let r = parse_range(v)?;
        match k.trim() {
            "ls" | "length_scale" => b.length_scale = r,
            "amp" | "amplitude" => b.amplitude = Some(r),
            "noise" => b.noise = Some(r),
            other => bail!("unknown bounds key '{other}' (use ls, amp, noise)"),
        }
    }
    Ok(b)
}

fn optim_config(a: &OptimArgs, training: &[SupportSample]) -> Result<(KernelFamily, OptimConfig)> {
    let family: KernelFamily = a.kernel.parse()?;
    let mut cfg = OptimConfig::default().with_seed(a.seed).with_starts(a.starts);
    cfg.max_iters = a.max_iters;
    cfg.tol = a.tol;
    if let Some(b) = &a.bounds {
        cfg.bounds = parse_bounds(b)?;
    }
    match a.init.as_str() {
        "bounds" => {}
        "search" => cfg.init = Some(hyperopt::search_range(training)),
        other => bail!("unknown init '{other}' (use bounds or search)"),
    }
    Ok((family, cfg))
}

fn read_training(paths: &[PathBuf], points: bool) -> Result<Vec<SupportSample>> {
    if paths.is_empty() {
        bail!("at least one --train file is required");
    }
    let mut out = Vec::new();
    for p in paths {
        out.extend(io::read_samples(p)?);
    }
    if points {
        out = out.iter().map(SupportSample::collapsed).collect();
    }
    Ok(out)
}

/// Per-sample noise when every sample carries one.
fn known_noise(samples: &[SupportSample]) -> Option<Vec<f64>> {
    samples.iter().map(|s| s.noise).collect()
}

fn header_has(path: &Path, column: &str) -> Result<bool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = text.lines().find(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty()).unwrap_or("");
    Ok(header.split(',').any(|h| h.trim().eq_ignore_ascii_case(column)))
}

/// A field file, or a sample file read as a field with zero spread.
fn read_any_field(path: &Path) -> Result<PosteriorField> {
    if header_has(path, "mean")? {
        return Ok(io::read_field(path)?);
    }
    let locations = io::read_samples(path)?;
    let mean = locations.iter().map(|s| s.value).collect();
    let std = vec![0.0; locations.len()];
    Ok(PosteriorField { locations, mean, std, cov: None })
}

fn with_values(cells: &[SupportSample], values: &[f64]) -> Vec<SupportSample> {
    cells
        .iter()
        .zip(values)
        .map(|(c, v)| SupportSample::new(c.centroid.clone(), c.extent.clone(), *v))
        .collect()
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn emit(lines: &[String], out: Option<&Path>, prov: &Provenance) -> Result<()> {
    for l in lines {
        println!("{l}");
    }
    if let Some(p) = out {
        prov.write_text(p, lines)?;
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let boundary = Boundary::from_index(a.scenario)?;
    let (nx, ny) = a.grid.split_once(',').context("--grid expects nx,ny")?;
    let (nx, ny): (usize, usize) = (nx.trim().parse()?, ny.trim().parse()?);
    if nx == 0 || ny == 0 {
        bail!("--grid needs positive sizes");
    }
    let prov = Provenance::new("synth", a, a.seed, &[])?.with(format!("scenario={}", a.scenario));
    let scn = Scenario::new(boundary);
    create_dir(&a.out)?;
    let h = prov.header();
    for (name, layout) in [("points.csv", Layout::Points), ("lines.csv", Layout::Lines), ("blocks.csv", Layout::Blocks)] {
        io::write_samples(&a.out.join(name), &synthetic::sample_layout(&scn, layout), &h)?;
    }
    let (x0, x1) = synthetic::X_RANGE;
    let (y0, y1) = synthetic::Y_RANGE;
    let (dx, dy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
    let mut grid = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = (x0 + (i as f64 + 0.5) * dx, y0 + (j as f64 + 0.5) * dy);
            grid.push(SupportSample::point(vec![x, y], scn.target(x, y)));
        }
    }
    io::write_samples(&a.out.join("truth_grid.csv"), &grid, &h)?;
    prov.write_text(&a.out.join("tau.txt"), &[format!("tau={}", scn.tau), format!("d_max={}", scn.d_max)])?;
    println!("scenario {} tau={} d_max={}", a.scenario, scn.tau, scn.d_max);
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let training = read_training(&a.train, a.points)?;
    let (family, cfg) = optim_config(&a.optim, &training)?;
    let inputs: Vec<&Path> = a.train.iter().map(PathBuf::as_path).collect();
    let prov = Provenance::new("fit", a, a.optim.seed, &inputs)?;
    let noise = known_noise(&training);
    let r = hyperopt::optimize_detailed(family, &training, noise.as_deref(), &cfg)?;
    let model = ModelFile { kernel: r.kernel, lml: r.lml, points: a.points };
    let mut body = model.lines();
    body.push(format!("best_start={}", r.best_start));
    body.push(format!("failed_starts={}", r.starts.iter().filter(|s| s.is_none()).count()));
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    prov.write_text(&a.out, &body)?;
    for l in &body {
        println!("{l}");
    }
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let model = ModelFile::parse(&a.model)?;
    let points = a.points || model.points;
    let training = read_training(&a.train, points)?;
    let mut query = io::read_samples(&a.query)?;
    if points {
        query = query.iter().map(SupportSample::collapsed).collect();
    }
    let mut inputs: Vec<&Path> = vec![&a.model, &a.query];
    inputs.extend(a.train.iter().map(PathBuf::as_path));
    let prov = Provenance::new("predict", a, 0, &inputs)?;
    let noise = known_noise(&training);
    let m = gp::fit(&model.kernel, &training, noise.as_deref())?;
    let field = m.predict(&query, false)?;
    io::write_field(&a.out, &field, &[], &prov.header())?;
    println!("wrote {} predictions to {}", field.len(), a.out.display());
    Ok(())
}

pub fn fuse(a: &FuseArgs) -> Result<()> {
    let epr = io::read_block_model(&a.epr)?;
    let bh = io::read_samples(&a.bh)?;
    let mut cfg = FusionConfig::new(a.z);
    cfg.epsilon = a.epsilon;
    cfg.neighborhood_radius = a.radius;
    cfg.subdivision = a.subdiv;
    cfg.use_epr = !a.no_epr;
    let (_, bench) = fusion::select_benches(&epr, &bh, a.z)?;
    let (family, opt) = optim_config(&a.optim, &bench)?;
    let report = fusion::fuse(&epr, &bh, &cfg, &opt, family)?;
    let mode = report.mode.tag();
    let prov = Provenance::new("fuse", a, a.optim.seed, &[&a.epr, &a.bh])?.with(format!("mode={mode}"));
    let h = prov.header();
    create_dir(&a.out)?;
    let q = &report.fused.locations;
    io::write_samples(&a.out.join("fused_mean.csv"), &with_values(q, &report.fused.mean), &h)?;
    io::write_samples(&a.out.join("fused_std.csv"), &with_values(q, &report.fused.std), &h)?;
    let e = &report.epr_blocks;
    io::write_samples(&a.out.join("sigma_hat.csv"), &with_values(e, &report.bh_uncertainty), &h)?;
    let counts: Vec<f64> = report.bh_count.iter().map(|c| *c as f64).collect();
    io::write_samples(&a.out.join("counts.csv"), &with_values(e, &counts), &h)?;
    io::write_samples(&a.out.join("noise.csv"), &with_values(e, &report.epr_noise), &h)?;
    io::write_field(&a.out.join("bh_only.csv"), &report.bh_only, &[], &h)?;
    let model = ModelFile { kernel: report.kernel.clone(), lml: report.lml, points: false };
    let mut body = model.lines();
    body.extend([
        format!("mode={mode}"),
        format!("bench_top={}", a.z),
        format!("epr_blocks={}", e.len()),
        format!("bh_samples={}", report.bh_samples.len()),
        format!("bh_density={}", report.bh_density),
        format!("epsilon={}", a.epsilon),
        format!("radius={}", a.radius),
        format!("subdivision={}", a.subdiv),
        format!("output_blocks={}", q.len()),
    ]);
    prov.write_text(&a.out.join("hyperparams.txt"), &body)?;
    for l in &body {
        println!("{l}");
    }
    if report.mode == FusionMode::BhOnly {
        println!("block values ignored; output is the assay-only prediction");
    }
    Ok(())
}

pub fn validate(a: &ValidateArgs) -> Result<()> {
    let t: Thresholds = a.thresholds.parse()?;
    let field = read_any_field(&a.field)?;
    let refs = io::read_samples(&a.reference)?;
    let prov = Provenance::new("validate", a, a.seed, &[&a.field, &a.reference])?;
    let agg = metrics::aggregate_to_cells(&field.locations, &refs);
    let (model, reference): (Vec<f64>, Vec<f64>) =
        field.mean.iter().zip(&agg).filter_map(|(m, r)| r.map(|r| (*m, r))).unzip();
    if model.is_empty() {
        bail!("no reference sample falls inside any field cell");
    }
    let rd = metrics::sigma_r(&model, &reference)?;
    let mc: Vec<_> = model.iter().map(|v| metrics::classify(*v, t)).collect();
    let rc: Vec<_> = reference.iter().map(|v| metrics::classify(*v, t)).collect();
    let cd = metrics::categorical_distance(&mc, &rc)?;
    let conf = metrics::confusion_probs(&mc, &rc)?;
    let mut lines = vec![
        format!("compared_cells={}", model.len()),
        format!("sigma_r={}", rd.sigma_r),
        format!("sigma_r_rejected={}", rd.rejected),
        format!("mean_abs_delta_c={}", cd.mean_abs),
        format!("mean_delta_c={}", cd.mean_signed),
        format!("thresholds={},{}", t.low, t.high),
    ];
    for (r, label) in metrics::CategoryLabel::ALL.iter().enumerate() {
        let row = match conf.probs[r] {
            Some(p) => p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","),
            None => "undefined".into(),
        };
        lines.push(format!("p_model_given_ref_{}={row}", label.short()));
    }
    emit(&lines, a.out.as_deref(), &prov)
}

pub fn classify(a: &ClassifyArgs) -> Result<()> {
    let t: Thresholds = a.thresholds.parse()?;
    let field = read_any_field(&a.field)?;
    let prov = Provenance::new("classify", a, a.seed, &[&a.field])?.with(format!("thresholds={},{}", t.low, t.high));
    let labels: Vec<_> = field.mean.iter().map(|m| metrics::classify(*m, t)).collect();
    let mut extra = vec![ExtraColumn { name: "class", values: labels.iter().map(|l| l.code().to_string()).collect() }];
    if a.hg_prob {
        let p = field.mean.iter().zip(&field.std).map(|(m, s)| format!("{}", metrics::hg_probability(*m, *s, t.high)));
        extra.push(ExtraColumn { name: "p_hg", values: p.collect() });
    }
    io::write_field(&a.out, &field, &extra, &prov.header())?;
    let mut counts = [0usize; 3];
    for l in &labels {
        counts[l.code() as usize - 1] += 1;
    }
    println!("W={} LG={} HG={}", counts[0], counts[1], counts[2]);
    if let Some(c) = &a.compare {
        let alt: Thresholds = c.parse()?;
        let rep = metrics::threshold_sensitivity(&field.mean, t, alt);
        println!("changed under {},{}: {}", alt.low, alt.high, rep.changes.len());
        for ch in &rep.changes {
            println!("  row {} mean {} {} -> {}", ch.index, ch.mean, ch.before, ch.after);
        }
    }
    Ok(())
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn repro(a: &ReproArgs) -> Result<()> {
    let family: KernelFamily = a.kernel.parse()?;
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let scenarios: Vec<u32> = a.scenarios.split(',').map(|s| s.trim().parse()).collect::<std::result::Result<_, _>>()?;
    let prov = Provenance::new("repro", a, a.seed, &[])?;
    create_dir(&a.out)?;
    let mut rows = vec!["scenario,seed,arm,boundary_rmse,value_rmse,lml,amplitude,length_scales,noise".to_string()];
    let mut summary = Vec::new();
    for sc in scenarios {
        let scn = Scenario::new(Boundary::from_index(sc)?);
        let mut training = synthetic::sample_layout(&scn, Layout::Points);
        training.extend(synthetic::sample_layout(&scn, Layout::Lines));
        let mut per_arm = [[Vec::new(), Vec::new()], [Vec::new(), Vec::new()]];
        let mut ordered = [true, true];
        for seed in a.seed..a.seed + a.seeds {
            let mut opt = OptimConfig::default().with_seed(seed).with_starts(a.starts);
            match a.init.as_str() {
                "bounds" => {}
                "search" => opt.init = Some(hyperopt::search_range(&training)),
                other => bail!("unknown init '{other}' (use bounds or search)"),
            }
            let e = synthetic::run_experiment(&scn, family, &opt)
                .with_context(|| format!("scenario {sc}, seed {seed}"))?;
            for (k, (arm, r)) in [("integral", &e.integral), ("point", &e.point)].into_iter().enumerate() {
                let ls = r.kernel.length_scales.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ");
                rows.push(format!(
                    "{sc},{seed},{arm},{},{},{},{},{ls},{}",
                    r.boundary_rmse, r.value_rmse, r.lml, r.kernel.amplitude, r.kernel.base_noise
                ));
                per_arm[k][0].push(r.boundary_rmse);
                per_arm[k][1].push(r.value_rmse);
            }
            ordered[0] &= e.integral.boundary_rmse < e.point.boundary_rmse;
            ordered[1] &= e.integral.value_rmse < e.point.value_rmse;
        }
        summary.push(format!("scenario={sc} tau={} d_max={}", scn.tau, scn.d_max));
        for (k, arm) in ["integral", "point"].iter().enumerate() {
            summary.push(format!(
                "scenario={sc} arm={arm} median_boundary_rmse={} median_value_rmse={}",
                median(&mut per_arm[k][0].clone()),
                median(&mut per_arm[k][1].clone())
            ));
        }
        summary.push(format!("scenario={sc} integral_better_boundary_every_seed={} integral_better_value_every_seed={}", ordered[0], ordered[1]));
    }
    let mut table = String::new();
    for c in prov.header() {
        table.push_str(&format!("# {c}\n"));
    }
    for r in &rows {
        table.push_str(r);
        table.push('\n');
    }
    fs::write(a.out.join("repro.csv"), table)?;
    emit(&summary, Some(&a.out.join("summary.txt")), &prov)
}
