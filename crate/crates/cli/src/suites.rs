use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use icb_core::attention::Mode;
use icb_core::combinatorics as comb;
use icb_core::seprank::{run_gap_experiment, GapConfig};
use icb_core::sphere;
use icb_designer::knn::recall;
use icb_designer::{
    build_dataset, export_dataset, ingest_embeddings, knn_search, mix_batches, Arrangement, DatasetParams, EmbeddedSentence, InputFormat, KnnParams, NswIndex,
    SearchIndex, Source,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{BoundsSection, DesignSection, GapSection, SphereSection};

pub type Result<T> = std::result::Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// One named pass/fail outcome; the process exit status is the conjunction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
    pub extra: serde_json::Map<String, Value>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?)
}

/// Shortest round-trip text, in exponent form outside `[1e-4, 1e15)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ---------------------------------------------------------------------------

pub fn gap(cfg: &GapSection, seed: u64, out: &Path) -> Result<Outcome> {
    let path = out.join("gap.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["mode", "L", "d_x", "H", "N", "eta", "Z", "tau", "spectral_rank", "cert_rank", "top8_singular_values", "seed"])?;
    let mut checks = Vec::new();
    for &layers in &cfg.layers {
        let rows = run_gap_experiment(&GapConfig {
            layers,
            width: cfg.width,
            heads: cfg.heads,
            seq_len: cfg.seq_len,
            vocab: cfg.vocab,
            etas: cfg.etas.clone(),
            grid: cfg.grid,
            lambda_min: cfg.lambda_min,
            lambda_max: cfg.lambda_max,
            templates: cfg.templates,
            tau_rel: cfg.tau_rel,
            seed,
        })?;
        for r in &rows {
            let sv: Vec<String> = r.top_singular_values.iter().copied().map(num).collect();
            w.write_record([
                r.mode.as_str().to_string(),
                r.layers.to_string(),
                r.width.to_string(),
                r.heads.to_string(),
                r.seq_len.to_string(),
                num(r.eta),
                r.grid.to_string(),
                num(r.tau),
                r.spectral_rank.to_string(),
                r.cert_rank.to_string(),
                sv.join(";"),
                r.seed.to_string(),
            ])?;
        }
        let mut pairs: Vec<(f64, usize, usize)> = rows
            .chunks(2)
            .map(|p| {
                let ic = p.iter().find(|r| r.mode == Mode::InContext).expect("one row per mode");
                let sq = p.iter().find(|r| r.mode == Mode::Sequential).expect("one row per mode");
                (ic.eta, ic.spectral_rank, sq.spectral_rank)
            })
            .collect();
        let dominated = pairs.iter().all(|&(_, ic, sq)| sq <= ic);
        checks.push(Check::new(format!("gap.L{layers}.sequential_le_in_context"), dominated, format!("{pairs:?}")));
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let monotone = pairs.windows(2).all(|w| w[1].2 <= w[0].2 + 1);
        checks.push(Check::new(format!("gap.L{layers}.nonincreasing_in_eta"), monotone, format!("{:?}", pairs.iter().map(|p| p.2).collect::<Vec<_>>())));
    }
    w.flush()?;
    Ok(Outcome { files: vec![path], checks, extra: Default::default() })
}

// ---------------------------------------------------------------------------

pub const LEMMA_IDS: [&str; 8] =
    ["multinomial_max", "s_recurrence", "argmax_s", "lattice_ball", "t_characterization", "binom_eta_count", "summand_count", "theorem_bound"];

struct LemmaCsv {
    id: &'static str,
    path: PathBuf,
    w: csv::Writer<fs::File>,
    rows: usize,
    failed: usize,
}

impl LemmaCsv {
    fn new(out: &Path, id: &'static str) -> Result<Self> {
        let path = out.join(format!("bounds_{id}.csv"));
        let mut w = csv_writer(&path)?;
        w.write_record(["lemma_id", "params", "exact_value", "bound_lower", "bound_upper", "pass"])?;
        Ok(Self { id, path, w, rows: 0, failed: 0 })
    }

    fn row(&mut self, params: String, exact: f64, lower: Option<f64>, upper: Option<f64>, pass: bool) -> Result<()> {
        self.w.write_record([self.id.to_string(), params, num(exact), opt(lower), opt(upper), pass.to_string()])?;
        self.rows += 1;
        self.failed += usize::from(!pass);
        Ok(())
    }

    fn finish(mut self, out: &mut Outcome) -> Result<()> {
        self.w.flush()?;
        out.checks.push(Check::new(format!("bounds.{}", self.id), self.failed == 0, format!("{} rows, {} failed", self.rows, self.failed)));
        out.files.push(self.path);
        Ok(())
    }
}

/// Sandwich slack for the asymptotic count lemmas.
pub const COUNT_SLACK: f64 = 4.0;
/// Slack for the lattice-ball bounds.
pub const LATTICE_SLACK: f64 = 2.0;

pub fn bounds(cfg: &BoundsSection, out_dir: &Path) -> Result<Outcome> {
    let mut out = Outcome::default();
    let ks = 0..=cfg.k_max;

    let mut c = LemmaCsv::new(out_dir, "multinomial_max")?;
    for k in ks.clone() {
        for &m in &cfg.ms {
            let mut best = f64::NEG_INFINITY;
            comb::for_each_composition(k, m as usize, |a| {
                if let Ok(v) = comb::log_multinomial(k, a) {
                    best = best.max(v.ln_abs());
                }
            });
            let formula = comb::balanced_multinomial(k, m)?.ln_abs();
            c.row(format!("K={k} M={m}"), best.exp(), Some(formula.exp()), Some(formula.exp()), (best - formula).abs() < 1e-12)?;
        }
    }
    c.finish(&mut out)?;

    let mut c = LemmaCsv::new(out_dir, "s_recurrence")?;
    for k in ks.clone() {
        for &m in &cfg.ms {
            for &eta in &cfg.etas {
                for n in 0..=k {
                    let direct = comb::s_direct(k, m, eta, n)?.to_f64();
                    let rec = comb::s_recurrence(k, m, eta, n)?.to_f64();
                    c.row(format!("K={k} M={m} eta={eta} n={n}"), direct, Some(rec), Some(rec), rel(direct, rec) < 1e-12)?;
                }
            }
        }
    }
    c.finish(&mut out)?;

    let mut c = LemmaCsv::new(out_dir, "argmax_s")?;
    for k in ks.clone().filter(|&k| k > 0) {
        for &m in &cfg.ms {
            for &eta in &cfg.etas {
                let (arg, _) = comb::argmax_s_exhaustive(k, m, eta)?;
                let f = comb::argmax_s(k, m, eta)?;
                let shown = if arg.contains(&f) { f } else { arg[0] };
                c.row(format!("K={k} M={m} eta={eta} argmax={arg:?}"), shown as f64, Some(f as f64), Some(f as f64), arg.contains(&f))?;
            }
        }
    }
    c.finish(&mut out)?;

    let mut c = LemmaCsv::new(out_dir, "lattice_ball")?;
    for &d in &cfg.lattice_dims {
        for &r in &cfg.lattice_radii {
            let exact = comb::lattice_ball_count(d, r)? as f64;
            let (lo, hi) = comb::lattice_ball_bounds(d, r);
            let pass = lo / LATTICE_SLACK <= exact && exact <= LATTICE_SLACK * hi;
            c.row(format!("d={d} R={r}"), exact, Some(lo), Some(hi), pass)?;
        }
    }
    c.finish(&mut out)?;

    let mut c = LemmaCsv::new(out_dir, "t_characterization")?;
    for k in ks.clone().filter(|&k| k > 0) {
        for &m in &cfg.ms {
            for &s in &cfg.s_values {
                let t = comb::characterize_t(k, m, s)?;
                c.row(format!("K={k} M={m} s={s}"), t.t_size as f64, Some(t.inner_size as f64), Some(t.outer_size as f64), t.inner_in_t && t.t_in_outer)?;
            }
        }
    }
    c.finish(&mut out)?;

    let mut c = LemmaCsv::new(out_dir, "binom_eta_count")?;
    for b in &cfg.binom {
        let r = comb::count_nonneg_binom_eta(b.k, b.eta, b.s)?;
        let pass = r.bound.is_none_or(|u| r.exact as f64 <= COUNT_SLACK * u);
        c.row(format!("K={} eta={} s={}", b.k, b.eta, b.s), r.exact as f64, None, r.bound, pass)?;
    }
    c.finish(&mut out)?;

    let mut c = LemmaCsv::new(out_dir, "summand_count")?;
    for k in ks.clone().filter(|&k| k > 0) {
        for &m in &cfg.ms {
            for &eta in &cfg.etas {
                for &s in &cfg.s_values {
                    let r = comb::count_nonneg_summands(k, m, eta, s)?;
                    let x = r.exact as f64;
                    let pass = r.upper.is_none_or(|u| x <= COUNT_SLACK * u) && r.lower.is_none_or(|l| x >= l / COUNT_SLACK);
                    c.row(format!("K={k} M={m} eta={eta} s={s}"), x, r.lower, r.upper, pass)?;
                }
            }
        }
    }
    c.finish(&mut out)?;

    let mut c = LemmaCsv::new(out_dir, "theorem_bound")?;
    for t in &cfg.theorems {
        let b = comb::theorem_bound(t)?;
        let ln = b.value.ln_abs();
        let params = format!(
            "d_x={} N={} H={} L={} eta={} lambda_min={} lambda_max={} eps={} M={} hypotheses={}",
            t.width,
            t.seq_len,
            t.heads,
            t.layers,
            t.eta,
            t.lambda_min,
            t.lambda_max,
            t.eps,
            t.coeff_bound,
            b.hypotheses_hold()
        );
        // the value is reported in log space
        c.row(params, ln, None, None, ln.is_finite())?;
    }
    c.finish(&mut out)?;

    out.extra.insert("lemmas".into(), json!(LEMMA_IDS));
    Ok(out)
}

// ---------------------------------------------------------------------------

struct SphereCsv {
    w: csv::Writer<fs::File>,
    checks: Vec<(String, usize, usize)>,
}

impl SphereCsv {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &mut self,
        id: &str,
        d: usize,
        lambda: Option<u32>,
        n: Option<usize>,
        trials: usize,
        estimate: f64,
        stderr: f64,
        bound: f64,
        pass: bool,
    ) -> Result<()> {
        self.w.write_record([
            id.to_string(),
            d.to_string(),
            lambda.map(|l| l.to_string()).unwrap_or_default(),
            n.map(|n| n.to_string()).unwrap_or_default(),
            trials.to_string(),
            num(estimate),
            num(stderr),
            num(bound),
            pass.to_string(),
        ])?;
        match self.checks.iter_mut().find(|c| c.0 == id) {
            Some(c) => {
                c.1 += 1;
                c.2 += usize::from(!pass);
            }
            None => self.checks.push((id.to_string(), 1, usize::from(!pass))),
        }
        Ok(())
    }
}

pub fn sphere_suite(cfg: &SphereSection, seed: u64, out_dir: &Path) -> Result<Outcome> {
    let path = out_dir.join("sphere.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["check_id", "d", "lambda", "n", "trials", "estimate", "stderr", "bound", "pass"])?;
    let mut csv = SphereCsv { w, checks: Vec::new() };

    for &d in &cfg.moment_dims {
        let e = sphere::mc_cosine_power_expectation(d, 1, cfg.moment_samples, seed.wrapping_add(d as u64))?;
        let target = 1.0 / (d as f64 + 1.0);
        csv.row("moment", d, Some(1), None, e.samples, e.estimate, e.stderr, target, (e.estimate - target).abs() < 3.0 * e.stderr)?;
    }
    for &d in &cfg.bound_dims {
        for l in d as u32..=cfg.bound_lambda_max {
            let e = sphere::mc_cosine_power_expectation(d, l, cfg.bound_samples, seed.wrapping_add(100 + d as u64))?;
            let b = sphere::cosine_power_bound(d, l);
            csv.row("cosine_power_bound", d, Some(l), None, e.samples, e.estimate, e.stderr, b, e.estimate <= b)?;
        }
    }
    for &d in &cfg.integrand_dims {
        for l in 1..=cfg.integrand_lambda_max {
            let c = sphere::integrand_bound_check(d, l, cfg.integrand_grid)?;
            csv.row("integrand", d, Some(l), None, cfg.integrand_grid, c.max_value, 0.0, c.bound, c.holds)?;
        }
    }
    for f in &cfg.frobenius {
        let c = sphere::frobenius_expectation_check(f.d, f.lambda, f.n, f.trials, seed)?;
        csv.row("frobenius", f.d, Some(f.lambda), Some(f.n), f.trials, c.mean.estimate, c.mean.stderr, c.bound, c.holds)?;
    }
    for i in 0..cfg.gram_count {
        let (d, n, l) = (1 + i % 5, 2 + (7 * i) % 11, 1 + (i % 4) as u32);
        let g = sphere::hadamard_power_gram(&sphere::sample_sphere(d, n, seed.wrapping_add(1000 + i as u64)), l)?;
        let c = sphere::spectral_count_check(&g)?;
        csv.row("spectral_count", d, Some(l), Some(n), 1, c.count as f64, 0.0, c.floor, c.holds)?;
    }
    for c in &cfg.construction {
        let d = (c.width - c.heads) / 2;
        let a = sphere::sample_sphere(d - 1, c.n, seed);
        let built = sphere::lower_bound_layer1_construction(&a, c.width, c.heads, c.seq_len, seed)?;
        let v = sphere::verify_layer1_construction(&built)?;
        csv.row("layer1_construction", d, None, Some(c.n), v.pairs, v.max_deviation, 0.0, 1e-12, v.max_deviation < 1e-12)?;
    }
    csv.w.flush()?;
    let checks =
        csv.checks.into_iter().map(|(id, rows, failed)| Check::new(format!("sphere.{id}"), failed == 0, format!("{rows} rows, {failed} failed"))).collect();
    Ok(Outcome { files: vec![path], checks, extra: Default::default() })
}

// ---------------------------------------------------------------------------

fn load(path: &Path, source: Source) -> Result<Vec<EmbeddedSentence>> {
    let format = InputFormat::detect(path)?;
    Ok(ingest_embeddings(path, format, source)?)
}

pub fn design(cfg: &DesignSection, seed: u64, out_dir: &Path) -> Result<Outcome> {
    let tasks = load(cfg.tasks.as_deref().ok_or("design.tasks: missing")?, Source::Task)?;
    let corpus = match &cfg.corpus {
        Some(p) => load(p, Source::Corpus)?,
        None => Vec::new(),
    };
    let knn = KnnParams { k: cfg.k, threshold: cfg.threshold, ..Default::default() };
    let params = DatasetParams {
        knn,
        budget: cfg.max_tokens,
        sep: cfg.sep_token,
        seed,
        dedup: cfg.dedup,
        anchors_as_neighbors: cfg.anchors_as_neighbors,
        index: if cfg.approximate { SearchIndex::Nsw { m: cfg.nsw_m, ef: cfg.nsw_ef } } else { SearchIndex::Exact },
    };
    let examples = build_dataset(cfg.variant, &tasks, &corpus, &params)?;
    let mut out = Outcome::default();
    let data = out_dir.join("dataset.jsonl");
    export_dataset(&examples, &data)?;
    out.files.push(data);

    let over = examples.iter().filter(|e| e.total_tokens() > cfg.max_tokens).count();
    out.checks.push(Check::new("design.budget", over == 0, format!("{} examples, {over} over {} tokens", examples.len(), cfg.max_tokens)));
    let anchors_first = match cfg.variant {
        Arrangement::NeighborsInContext | Arrangement::RandomInContext => examples.iter().zip(&tasks).all(|(e, t)| e.members[0] == t.id),
        _ => true,
    };
    out.checks.push(Check::new("design.anchor_first", anchors_first, ""));
    out.extra.insert("examples".into(), json!(examples.len()));
    out.extra.insert("members".into(), json!(examples.iter().map(|e| e.members.len()).sum::<usize>()));

    if cfg.approximate {
        let mut pool = corpus.clone();
        if cfg.anchors_as_neighbors {
            pool.extend_from_slice(&tasks);
        }
        let exact = knn_search(&tasks, &pool, &knn)?;
        let index = NswIndex::build(&pool, cfg.nsw_m, cfg.nsw_ef)?;
        let approx = tasks.iter().map(|t| index.search(t, &knn)).collect::<icb_designer::Result<Vec<_>>>()?;
        out.extra.insert("recall".into(), json!(recall(&approx, &exact)));
    }

    if let Some(batch_size) = cfg.batch_size {
        let regular_src = match &cfg.regular {
            Some(p) => load(p, Source::Corpus)?,
            None => corpus.clone(),
        };
        let regular: Vec<String> = (0..regular_src.len()).map(|i| format!("reg-{i:06}")).collect();
        let designed: Vec<String> = examples.iter().map(|e| e.example_id.clone()).collect();
        let mixed = mix_batches(regular, designed, batch_size, seed)?;
        let path = out_dir.join("batches.jsonl");
        let mut f = std::io::BufWriter::new(fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?);
        for (i, b) in mixed.batches.iter().enumerate() {
            writeln!(f, "{}", json!({"batch": i, "regular": b.regular, "designed": b.designed}))?;
        }
        f.flush()?;
        out.files.push(path);
        let half = mixed.batches.iter().all(|b| b.regular.len() == batch_size / 2 && b.designed.len() == batch_size / 2);
        out.checks.push(Check::new("design.half_split", half, format!("{} batches", mixed.batches.len())));
        out.extra.insert(
            "batches".into(),
            json!({"count": mixed.batches.len(), "remainder_regular": mixed.remainder_regular, "remainder_designed": mixed.remainder_designed}),
        );
    }
    Ok(out)
}
