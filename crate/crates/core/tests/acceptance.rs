//! Acceptance criteria. Each check prints one PASS/FAIL line; the binary fails if any check fails.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use chimera_core::clustering::{
    kmeans, label_groups, laplacian_eigenmaps, sector_breakdown, GroupLabel, SectorMap,
    SECTOR_HEADERS,
};
use chimera_core::coherence::{
    characteristic_matrix, coupling_strengths, detect_coherent_set, DEFAULT_EPSILON,
};
use chimera_core::market_data::{
    correlation_matrix, coupling_kernel, coupling_matrix, log_returns, sliding_windows,
    synthetic_market, CouplingMatrix, FactorBlock, MarketModel, Population, ReturnMatrix,
    WindowSpec,
};
use chimera_core::oscillator_sim::{derive_seed, simulate, SimParams, SimulationSummary};
use chimera_core::pipeline::{self, PipelineConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn kernel_exactness() -> Outcome {
    let cases = [
        (-1.0, 0.0),
        (-0.5, 1.0),
        (0.0, 2f64.sqrt()),
        (0.5, 3f64.sqrt()),
        (1.0, 2.0),
    ];
    let mut worst: f64 = 0.0;
    for (r, expected) in cases {
        worst = worst.max((coupling_kernel(r) - expected).abs());
    }
    // the same values through the matrix path: y = r x + sqrt(1 - r²) z with x ⟂ z
    let x = [1.0, 1.0, -1.0, -1.0];
    let z = [1.0, -1.0, 1.0, -1.0];
    for (r, expected) in cases {
        let s = (1.0 - r * r).sqrt();
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| r * a + s * b).collect();
        let mut values = Array2::zeros((2, 4));
        for t in 0..4 {
            values[[0, t]] = x[t];
            values[[1, t]] = y[t];
        }
        let returns = ReturnMatrix::new(vec!["X".into(), "Y".into()], values).unwrap();
        let c = coupling_matrix(&correlation_matrix(&returns, 0..4, 0).unwrap());
        worst = worst.max((c.values()[[0, 1]] - expected).abs());
    }
    outcome(worst <= 1e-12, format!("max error {worst:.1e}"))
}

fn locked_state_oracle() -> Outcome {
    let coupling = CouplingMatrix::uniform(50, 2.0).unwrap();
    let alpha = FRAC_PI_2 - 0.10;
    let expected = -2.0 * alpha.sin();
    let mut locked = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let s = simulate(&coupling, &SimParams::default().with_seed(seed)).unwrap();
        let sigma = s.velocity_std.iter().copied().fold(0.0, f64::max);
        let on_target = s.mean_velocity.iter().all(|&v| (v - expected).abs() <= 1e-3);
        worst = worst.max(sigma);
        if sigma < 1e-6 && on_target {
            locked += 1;
        }
    }
    outcome(
        locked >= 95,
        format!("{locked}/100 seeds below σ = 1e-6 at <v> = {expected:.6}; largest σ {worst:.1e}"),
    )
}

fn frequency_shift() -> Outcome {
    let panel = synthetic_market(20, 30, 0.85, 120, 4).unwrap();
    let returns = log_returns(&panel).unwrap();
    let coupling = coupling_matrix(&correlation_matrix(&returns, 10..72, 0).unwrap());
    let base = SimParams::default().with_seed(99);
    let a = simulate(&coupling, &base).unwrap();
    let b = simulate(&coupling, &SimParams { omega: 0.7, ..base }).unwrap();
    let d_sigma = a
        .velocity_std
        .iter()
        .zip(&b.velocity_std)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let d_mean = a
        .mean_velocity
        .iter()
        .zip(&b.mean_velocity)
        .map(|(x, y)| (y - x - 0.7).abs())
        .fold(0.0, f64::max);
    outcome(
        d_sigma <= 1e-9 && d_mean <= 1e-9,
        format!("max |Δσ| {d_sigma:.1e}, max |Δ<v> - 0.7| {d_mean:.1e}"),
    )
}

fn chimera_structure() -> Outcome {
    let (n_block, n_noise) = (20, 30);
    let panel = synthetic_market(n_block, n_noise, 0.85, 500, 11).unwrap();
    let returns = log_returns(&panel).unwrap();
    let ranges = sliding_windows(&returns, WindowSpec::default()).unwrap();
    let eps = DEFAULT_EPSILON;
    let mut good = 0;
    for (w, range) in ranges.iter().enumerate() {
        let coupling = coupling_matrix(&correlation_matrix(&returns, range.clone(), w).unwrap());
        let params = SimParams::default().with_seed(derive_seed(11, w as u64));
        let s = simulate(&coupling, &params).unwrap();
        let block = s.velocity_std[..n_block].iter().filter(|&&v| v < eps).count();
        let noise = s.velocity_std[n_block..].iter().filter(|&&v| v < eps).count();
        if block as f64 >= 0.9 * n_block as f64 && noise as f64 <= 0.1 * n_noise as f64 {
            good += 1;
        }
    }
    let frac = good as f64 / ranges.len() as f64;
    outcome(
        frac >= 0.9,
        format!("{good}/{} windows show the coexistence pattern at ε = {eps}", ranges.len()),
    )
}

fn scan_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps = 0.05;
    let mut exclusions = 0;
    for trial in 0..2000 {
        let n = rng.random_range(1..=25);
        // entries on a coarse grid so strength ties are exact and frequent
        let mut c = Array2::zeros((n, n));
        for i in 0..n {
            c[[i, i]] = 2.0;
            for j in 0..i {
                let v = rng.random_range(0..=4) as f64 * 0.5;
                c[[i, j]] = v;
                c[[j, i]] = v;
            }
        }
        let coupling = CouplingMatrix::from_raw(c.clone(), trial).unwrap();
        let sigma: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.7) { rng.random::<f64>() * 0.04 } else { 0.05 + rng.random::<f64>() })
            .collect();
        let summary = SimulationSummary {
            mean_velocity: vec![0.0; n],
            velocity_std: sigma.clone(),
            final_phases: vec![0.0; n],
            window_index: trial,
        };
        let ranking = coupling_strengths(&coupling);
        let p = detect_coherent_set(&summary, &ranking, eps).unwrap();

        let strength: Vec<f64> = (0..n).map(|i| (0..n).map(|j| c[[i, j]]).sum()).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| strength[b].partial_cmp(&strength[a]).unwrap().then(a.cmp(&b)));
        let mut prefix = 0;
        while prefix < n && sigma[order[prefix]] < eps {
            prefix += 1;
        }
        if p.coherent != order[..prefix] || p.incoherent != order[prefix..] {
            return outcome(false, format!("trial {trial}: coherent set differs from the maximal prefix"));
        }
        if order[prefix..].iter().any(|&i| sigma[i] < eps) {
            exclusions += 1;
        }
    }
    outcome(
        exclusions > 0,
        format!("2000 random cases match the maximal prefix; {exclusions} exercise the exclusion rule"),
    )
}

fn window_count() -> Outcome {
    let panel = synthetic_market(2, 1, 0.5, 3230, 1).unwrap();
    let returns = log_returns(&panel).unwrap();
    let ranges = sliding_windows(&returns, WindowSpec::default()).unwrap();
    let ends_ok = ranges.first() == Some(&(0..62)) && ranges.last() == Some(&(3167..3229));
    outcome(
        ranges.len() == 3168 && ends_ok,
        format!("{} prices, {} return columns, {} windows", panel.n_dates(), returns.n_cols(), ranges.len()),
    )
}

/// Strong block, a block that drops from strong to weak loading halfway, independent noise.
fn three_population_model(seed: u64, size: usize, days: usize) -> MarketModel {
    MarketModel {
        blocks: vec![
            FactorBlock::new(size, 0.85),
            FactorBlock::new(size, 0.85).with_switch(days / 2, 0.3),
        ],
        n_noise: size,
        days,
        seed,
    }
}

fn clustering_recovery() -> Outcome {
    let size = 15;
    let mut details = Vec::new();
    let mut pass = true;
    for seed in 1..=3 {
        let model = three_population_model(seed, size, 500);
        let truth = model.populations();
        let returns = log_returns(&model.generate().unwrap()).unwrap();
        let ranges = sliding_windows(&returns, WindowSpec::new(62, 3).unwrap()).unwrap();
        let partitions: Vec<_> = ranges
            .iter()
            .enumerate()
            .map(|(w, range)| {
                let c = coupling_matrix(&correlation_matrix(&returns, range.clone(), w).unwrap());
                let params = SimParams::default().with_seed(derive_seed(seed, w as u64));
                let s = simulate(&c, &params).unwrap();
                detect_coherent_set(&s, &coupling_strengths(&c), DEFAULT_EPSILON).unwrap()
            })
            .collect();
        let chi = characteristic_matrix(&partitions, 3 * size).unwrap();
        let embedding = laplacian_eigenmaps(&chi, 10).unwrap();
        let raw = kmeans(&embedding.coords, 3, seed, 10).unwrap();
        let assignment = label_groups(&raw, chi.counts()).unwrap();

        let expected = |p: &Population| match p {
            Population::Block(0) => GroupLabel::High,
            Population::Block(_) => GroupLabel::Middle,
            Population::Noise => GroupLabel::Low,
        };
        let agree = assignment
            .labels
            .iter()
            .zip(&truth)
            .filter(|(l, p)| **l == expected(p))
            .count();
        let mean_of = |label: GroupLabel| {
            let members: Vec<usize> = (0..truth.len())
                .filter(|&i| assignment.labels[i] == label)
                .map(|i| chi.counts()[i])
                .collect();
            members.iter().sum::<usize>() as f64 / members.len().max(1) as f64
        };
        let ordered = mean_of(GroupLabel::Low) <= mean_of(GroupLabel::Middle)
            && mean_of(GroupLabel::Middle) <= mean_of(GroupLabel::High);
        let ok = agree as f64 >= 0.9 * truth.len() as f64 && ordered;
        pass &= ok;
        details.push(format!("seed {seed}: {agree}/{}", truth.len()));
    }
    outcome(pass, format!("label agreement {}", details.join(", ")))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for k in 0..x.len() {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn correlation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let values = Array2::from_shape_fn((5, 30), |_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            0.02 * g
        });
        let tickers = (0..5).map(|i| format!("S{i}")).collect();
        let returns = ReturnMatrix::new(tickers, values.clone()).unwrap();
        let corr = correlation_matrix(&returns, 0..30, 0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let x: Vec<f64> = values.row(i).to_vec();
                let y: Vec<f64> = values.row(j).to_vec();
                let oracle = if i == j { 1.0 } else { pearson(&x, &y) };
                worst = worst.max((corr.values()[[i, j]] - oracle).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("max deviation over 100 panels {worst:.1e}"))
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("input.csv");
    three_population_model(8, 12, 300)
        .generate()
        .unwrap()
        .write_wide_csv(&input)
        .unwrap();
    let cfg = PipelineConfig {
        input: Some(input),
        step: 2,
        seed: 8,
        output_dir: tmp.path().join("out"),
        ..Default::default()
    };
    let names = [
        pipeline::CLUSTERS,
        pipeline::PARTITIONS,
        pipeline::CHI,
        pipeline::EMBEDDING,
        pipeline::MANIFEST,
    ];
    let snapshot = || -> BTreeMap<&str, Vec<u8>> {
        names
            .iter()
            .map(|&n| (n, fs::read(cfg.output_dir.join(n)).unwrap()))
            .collect()
    };
    if let Err(e) = pipeline::run_pipeline(&cfg) {
        return outcome(false, format!("first run failed: {e}"));
    }
    let first = snapshot();
    fs::remove_dir_all(&cfg.output_dir).unwrap();
    if let Err(e) = pipeline::run_pipeline(&cfg) {
        return outcome(false, format!("second run failed: {e}"));
    }
    let second = snapshot();
    let differing: Vec<&str> = names.iter().copied().filter(|n| first[n] != second[n]).collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} artifacts byte-identical across two runs", names.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

/// Hundredths of a percent, rounded half up, by integer arithmetic.
fn percent(count: usize, total: usize) -> String {
    let hundredths = (count * 20_000 + total) / (2 * total);
    format!("{}.{:02}%", hundredths / 100, hundredths % 100)
}

fn report_fidelity() -> Outcome {
    // (sector, high, middle, low, tag): member counts whose shares give the published rows
    let sectors = [
        ("Materials", 20, 4, 5, "Cyclical"),
        ("Industrials", 33, 13, 9, "Cyclical"),
        ("Consumer Discretionary", 33, 17, 17, "Cyclical"),
        ("Financial", 19, 6, 9, "Cyclical"),
        ("Information Technology", 2, 47, 8, "Cyclical"),
        ("Telecommunications Services", 0, 2, 1, "Defensive"),
        ("Energy", 0, 1, 35, "Defensive"),
        ("Utilities", 0, 1, 28, "Defensive"),
        ("Consumer Staples", 1, 0, 13, "Defensive"),
        ("Health Care", 1, 11, 30, "Defensive"),
    ];
    let published = [
        ("68.97%", "13.79%", "17.24%"),
        ("60.00%", "23.64%", "16.36%"),
        ("49.25%", "25.37%", "25.37%"),
        ("55.88%", "17.65%", "26.47%"),
        ("3.51%", "82.46%", "14.04%"),
        ("0.00%", "66.67%", "33.33%"),
        ("0.00%", "2.78%", "97.22%"),
        ("0.00%", "3.45%", "96.55%"),
        ("7.14%", "0.00%", "92.86%"),
        ("2.38%", "26.19%", "71.43%"),
    ];
    let mut map = SectorMap::new();
    let mut tickers = Vec::new();
    let mut labels = Vec::new();
    for (s, (name, high, middle, low, tag)) in sectors.iter().enumerate() {
        let groups = [(GroupLabel::High, *high), (GroupLabel::Middle, *middle), (GroupLabel::Low, *low)];
        for (label, count) in groups {
            for k in 0..count {
                let ticker = format!("S{s}_{}_{k}", label.as_str());
                map.insert(&ticker, name, Some(tag));
                tickers.push(ticker);
                labels.push(label);
            }
        }
    }
    let table = sector_breakdown(&tickers, &labels, &map).unwrap();
    let text = table.render();
    let lines: Vec<&str> = text.lines().collect();
    let header: Vec<&str> = lines[1].split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
    if header != SECTOR_HEADERS {
        return outcome(false, format!("header {header:?}"));
    }
    for (k, (name, high, middle, low, tag)) in sectors.iter().enumerate() {
        let total = high + middle + low;
        let cells: Vec<&str> = lines[3 + k].split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
        let oracle = [percent(*high, total), percent(*middle, total), percent(*low, total)];
        let paper = [published[k].0, published[k].1, published[k].2];
        if cells[0] != *name || cells[4] != *tag || cells[1..4] != oracle || oracle != paper {
            return outcome(false, format!("row {name}: {cells:?}"));
        }
    }
    outcome(
        true,
        "layout and all ten rows match on a count fixture; values from the original panel cannot be checked without that data",
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("coupling kernel exactness", kernel_exactness),
        ("locked-state oracle", locked_state_oracle),
        ("frequency-shift property", frequency_shift),
        ("coherent/incoherent coexistence", chimera_structure),
        ("scan-algorithm semantics", scan_semantics),
        ("window count", window_count),
        ("clustering recovery", clustering_recovery),
        ("correlation oracle equivalence", correlation_oracle),
        ("pipeline determinism", determinism),
        ("report fidelity", report_fidelity),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict}  {name}: {} ({:.1} s)",
            k + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed += 1;
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
