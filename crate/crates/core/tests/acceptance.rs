//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gvd_core::diagram::{check_star_shaped, compute_cells, verify, StarWitness};
use gvd_core::distance::{DistanceModel, Metric, Site, Transform};
use gvd_core::evaluate::moment_of_inertia;
use gvd_core::geometry::Point;
use gvd_core::model::{check_balance, rounding_epsilon_bound, FractionalClustering, Instance, Tolerances, Unit};
use gvd_core::pipeline::{run_pipeline, Approach, PipelineOptions};
use gvd_core::rounding::round_tree;
use gvd_core::siteopt::{balanced_kmeans, compute_phi, kmeans_plus_plus};
use gvd_core::solver::{brute_force_oracle, relative_interior_solution, solve, TransportProblem};
use gvd_core::synthetic::{blobs, u_shape, Blob};
use gvd_core::util::SeededRng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden() -> Instance {
    let units = (0..4).map(|j| Unit::new(format!("x{}", j + 1), j as f64, 0.0, 1.0)).collect();
    Instance::new(units, Some(vec![(0, 1, 1.0), (1, 2, 1.0), (1, 3, 2.0)]), 2, None).unwrap()
}

fn golden_model(t: Transform) -> DistanceModel {
    DistanceModel::uniform(Metric::Graph, t, vec![Site::Unit(0), Site::Unit(3)]).unwrap()
}

fn rows(r: [[f64; 4]; 2]) -> FractionalClustering {
    FractionalClustering::from_rows(&[r[0].to_vec(), r[1].to_vec()], &Tolerances::default()).unwrap()
}

const C_A: [[f64; 4]; 2] = [[1.0, 0.5, 0.5, 0.0], [0.0, 0.5, 0.5, 1.0]];
const C_B: [[f64; 4]; 2] = [[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]];

fn golden_identity() -> Outcome {
    let inst = golden();
    let model = golden_model(Transform::Identity);
    let problem = TransportProblem::from_instance(&inst, &model).unwrap();
    let sol = solve(&problem).map_err(|e| e.to_string())?;
    let oracle = brute_force_oracle(&problem).map_err(|e| e.to_string())?;
    ensure(sol.objective == 4.0 && oracle.objective == 4.0, || {
        format!("objective {} (oracle {})", sol.objective, oracle.objective)
    })?;
    ensure(sol.duals.mu == vec![1.0, 0.0], || format!("mu {:?}", sol.duals.mu))?;
    let tuned = model.clone().with_mu(sol.duals.mu.clone());
    let cells = compute_cells(&inst, &tuned).map_err(|e| e.to_string())?;
    ensure(cells.cell(0) == vec![0, 1, 2] && cells.cell(1) == vec![1, 2, 3], || {
        format!("cells {:?} / {:?}", cells.cell(0), cells.cell(1))
    })?;
    let ra = verify(&inst, &tuned, &rows(C_A)).unwrap();
    let rb = verify(&inst, &tuned, &rows(C_B)).unwrap();
    ensure(ra.feasible && rb.feasible, || String::from("C(a) or C(b) infeasible"))?;
    ensure(ra.supports && !rb.supports, || {
        format!("supports: C(a) {}, C(b) {}", ra.supports, rb.supports)
    })?;
    Ok(String::from("objective 4, mu (1,0), cells {x1,x2,x3}/{x2,x3,x4}, only C(a) supported"))
}

fn golden_square() -> Outcome {
    let inst = golden();
    let model = golden_model(Transform::Square);
    let problem = TransportProblem::from_instance(&inst, &model).unwrap();
    let oracle = brute_force_oracle(&problem).map_err(|e| e.to_string())?;
    ensure(oracle.minimizers == vec![vec![0, 1, 0, 1]], || format!("oracle minimizers {:?}", oracle.minimizers))?;
    let sol = solve(&problem).map_err(|e| e.to_string())?;
    ensure(sol.clustering == rows(C_B), || format!("solution {:?}", sol.clustering.to_rows()))?;
    ensure(sol.duals.mu == vec![4.0, 0.0], || format!("mu {:?}", sol.duals.mu))?;
    let tuned = model.with_mu(sol.duals.mu.clone());
    let cells = compute_cells(&inst, &tuned).unwrap();
    ensure(cells.cell(0) == vec![0, 2] && cells.cell(1) == vec![1, 3], || {
        format!("cells {:?} / {:?}", cells.cell(0), cells.cell(1))
    })?;
    let report = verify(&inst, &tuned, &sol.clustering).unwrap();
    ensure(report.supports, || String::from("C(b) not supported"))?;
    let star = check_star_shaped(&inst, &sol.clustering, &[0, 3]).unwrap();
    let expected = StarWitness {
        cluster: 0,
        unit: 2,
        via: 1,
    };
    ensure(!star.star_shaped && star.witness == Some(expected), || format!("star {star:?}"))?;
    Ok(String::from("unique C(b), mu (4,0), cells {x1,x3}/{x2,x4}, witness (cluster 1, x3, x2)"))
}

fn vertex_sparsity() -> Outcome {
    let mut rng = SeededRng::new(0x5eed_0001);
    let mut worst_gap: f64 = 0.0;
    for n in 0..1000 {
        let (inst, model) = common::random_euclidean(&mut rng, 60, 8);
        let k = inst.k();
        let problem = TransportProblem::from_instance(&inst, &model).unwrap();
        let sol = solve(&problem).map_err(|e| format!("instance {n}: {e}"))?;
        let units = sol.clustering.fractional_units().len();
        let entries = sol.clustering.fractional_entry_count();
        ensure(units < k && entries <= 2 * (k - 1), || {
            format!("instance {n}: {units} fractional units, {entries} entries, k = {k}")
        })?;
        worst_gap = worst_gap.max(sol.duality_gap());
        ensure(sol.duality_gap() <= 1e-9, || format!("instance {n}: gap {}", sol.duality_gap()))?;
    }
    Ok(format!("1000 instances, worst relative gap {worst_gap:.1e}"))
}

fn rounding_bounds() -> Outcome {
    let mut rng = SeededRng::new(0x5eed_0001);
    let tol = Tolerances::default();
    let mut worst: f64 = 0.0;
    for n in 0..1000 {
        let (inst, model) = common::random_euclidean(&mut rng, 60, 8);
        let problem = TransportProblem::from_instance(&inst, &model).unwrap();
        let sol = solve(&problem).unwrap();
        let out = round_tree(&inst, &sol.clustering).map_err(|e| format!("instance {n}: {e}"))?;
        let bound = rounding_epsilon_bound(&inst);
        let check = check_balance(&out.clustering, &inst, bound, &tol).unwrap();
        ensure(check.epsilon_balanced && check.integer, || {
            format!("instance {n}: achieved {} bound {bound}", out.epsilon_achieved)
        })?;
        ensure(out.epsilon_achieved <= bound + 1e-9, || format!("instance {n}: achieved {}", out.epsilon_achieved))?;
        for (i, j, _) in out.clustering.entries() {
            ensure(sol.clustering.get(i, j) > 0.0, || format!("instance {n}: ({i},{j}) outside support"))?;
        }
        let tuned = model.clone().with_mu(sol.duals.mu.clone());
        let report = verify(&inst, &tuned, &out.clustering).unwrap();
        ensure(report.feasible, || format!("instance {n}: diagram no longer feasible"))?;
        worst = worst.max(out.epsilon_achieved / bound);
    }
    Ok(format!("1000 instances, worst achieved/bound {worst:.3}"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = SeededRng::new(0x5eed_0002);
    for n in 0..200 {
        let (inst, model) = common::random_integral(&mut rng, 8, 3);
        let problem = TransportProblem::from_instance(&inst, &model).unwrap();
        let sol = solve(&problem).map_err(|e| format!("instance {n}: {e}"))?;
        let oracle = brute_force_oracle(&problem).unwrap();
        ensure(sol.objective == oracle.objective, || {
            format!("instance {n}: solve {} oracle {}", sol.objective, oracle.objective)
        })?;
        let a = sol.clustering.assignment().ok_or_else(|| format!("instance {n}: fractional output"))?;
        ensure(oracle.minimizers.contains(&a), || format!("instance {n}: {a:?} not an oracle minimizer"))?;
    }
    Ok(String::from("200 instances, objectives identical, outputs integral"))
}

fn star_shapedness() -> Outcome {
    let mut rng = SeededRng::new(0x5eed_0003);
    for n in 0..200 {
        let (inst, sites) = common::random_graph(&mut rng, 30, 4);
        let model = DistanceModel::uniform(Metric::Graph, Transform::Identity, sites.iter().map(|&s| Site::Unit(s)).collect()).unwrap();
        let problem = TransportProblem::from_instance(&inst, &model).unwrap();
        let sol = relative_interior_solution(&problem).map_err(|e| format!("graph {n}: {e}"))?;
        let tuned = model.with_mu(sol.duals.mu.clone());
        let report = verify(&inst, &tuned, &sol.clustering).unwrap();
        ensure(report.supports, || format!("graph {n}: relative-interior solution not supported"))?;
        let star = check_star_shaped(&inst, &sol.clustering, &sites).unwrap();
        ensure(star.star_shaped, || format!("graph {n}: witness {:?}", star.witness))?;
    }
    let inst = golden();
    let model = golden_model(Transform::Square);
    let sol = relative_interior_solution(&TransportProblem::from_instance(&inst, &model).unwrap()).unwrap();
    let tuned = model.with_mu(sol.duals.mu.clone());
    ensure(verify(&inst, &tuned, &sol.clustering).unwrap().supports, || String::from("squared counterexample not supported"))?;
    ensure(!check_star_shaped(&inst, &sol.clustering, &[0, 3]).unwrap().star_shaped, || {
        String::from("squared counterexample is star-shaped")
    })?;
    Ok(String::from("200 graphs star-shaped; squared 4-node example supported and not star-shaped"))
}

fn random_balanced(rng: &mut SeededRng) -> (Instance, FractionalClustering) {
    let k = 1 + rng.below(6);
    let m = k + rng.below(40);
    let units: Vec<Unit> = (0..m)
        .map(|j| {
            Unit::new(
                format!("u{j}"),
                rng.range(-50.0, 150.0),
                rng.range(-50.0, 150.0),
                rng.range(0.1, 4.0),
            )
        })
        .collect();
    // random fractional clustering; capacities are its cluster weights
    let mut entries = Vec::new();
    let mut load = vec![0.0; k];
    for j in 0..m {
        let a = if j < k { j } else { rng.below(k) };
        let split = rng.below(3) == 0 && k > 1;
        if split {
            let b = (a + 1 + rng.below(k - 1)) % k;
            let t = rng.range(0.1, 0.9);
            entries.push((a, j, t));
            entries.push((b, j, 1.0 - t));
            load[a] += t * units[j].weight;
            load[b] += (1.0 - t) * units[j].weight;
        } else {
            entries.push((a, j, 1.0));
            load[a] += units[j].weight;
        }
    }
    let c = FractionalClustering::from_entries(k, m, entries, &Tolerances::default()).unwrap();
    let inst = Instance::new(units, None, k, Some(load)).unwrap();
    (inst, c)
}

fn moment_identity_and_monotone() -> Outcome {
    let mut rng = SeededRng::new(0x5eed_0004);
    let mut worst: f64 = 0.0;
    for n in 0..1000 {
        let (inst, c) = random_balanced(&mut rng);
        let lhs = moment_of_inertia(&inst, &c).unwrap() + compute_phi(&inst, &c).unwrap();
        let rhs: f64 = inst.units().iter().map(|u| u.weight * u.position.norm_sq()).sum();
        let rel = (lhs - rhs).abs() / rhs.abs().max(1.0);
        worst = worst.max(rel);
        ensure(rel <= 1e-9, || format!("clustering {n}: relative error {rel:e}"))?;
    }
    let mut max_rise: f64 = 0.0;
    for run in 0..50 {
        let k = 2 + rng.below(4);
        let specs: Vec<Blob> = (0..k)
            .map(|_| Blob {
                center: Point::new(rng.range(0.0, 10.0), rng.range(0.0, 10.0)),
                spread: rng.range(0.3, 2.0),
                count: 5 + rng.below(20),
            })
            .collect();
        let inst = blobs(&specs, k, rng.next_u64()).unwrap();
        let init = kmeans_plus_plus(&inst, k, &mut rng).unwrap();
        let trace = balanced_kmeans(&inst, &init, &vec![Metric::Euclidean; k], 100, 1e-9).map_err(|e| format!("run {run}: {e}"))?;
        for w in trace.iterations.windows(2) {
            let rise = (w[1].objective - w[0].objective) / w[0].objective.abs().max(1.0);
            max_rise = max_rise.max(rise);
            ensure(rise <= 1e-9, || format!("run {run}: objective rose by {rise:e}"))?;
        }
    }
    Ok(format!("identity worst {worst:.1e}; 50 k-means runs, largest relative rise {max_rise:.1e}"))
}

fn three_blobs() -> Instance {
    let specs = [
        Blob {
            center: Point::new(0.0, 0.0),
            spread: 1.0,
            count: 200,
        },
        Blob {
            center: Point::new(7.0, 0.0),
            spread: 1.0,
            count: 150,
        },
        Blob {
            center: Point::new(3.5, 6.0),
            spread: 1.0,
            count: 150,
        },
    ];
    blobs(&specs, 5, 11).unwrap()
}

fn fig2_pipeline() -> Outcome {
    let inst = u_shape(500, 5, 2024).unwrap();
    let tol = Tolerances::default();
    let reference_run = run_pipeline(&inst, Approach::Power, &PipelineOptions::default()).map_err(|e| format!("power: {e}"))?;
    let options = PipelineOptions {
        reference: Some(reference_run.clustering().clone()),
        ..PipelineOptions::default()
    };
    let mut notes = Vec::new();
    for a in Approach::ALL {
        let t = Instant::now();
        let out = run_pipeline(&inst, a, &options).map_err(|e| format!("{a}: {e}"))?;
        let check = check_balance(out.clustering(), &inst, 0.0, &tol).unwrap();
        ensure(check.strong && check.integer && out.summary.max_deviation == 0.0, || {
            format!("{a}: max deviation {}", out.summary.max_deviation)
        })?;
        if a == Approach::ShortestPath {
            let conn = out.summary.connectivity.clone().unwrap();
            ensure(conn.iter().all(|&c| c), || format!("shortest-path connectivity {conn:?}"))?;
        }
        notes.push(format!("{a} {:.1}s", t.elapsed().as_secs_f64()));
    }
    let blobs = three_blobs();
    let power = run_pipeline(&blobs, Approach::Power, &PipelineOptions::default()).unwrap();
    let awvd = run_pipeline(&blobs, Approach::AdditivelyWeighted, &PipelineOptions::default()).unwrap();
    let (p, w) = (power.summary.moment_of_inertia.unwrap(), awvd.summary.moment_of_inertia.unwrap());
    ensure(p <= 0.9 * w, || format!("power MoI {p:.2} vs awvd {w:.2}"))?;
    Ok(format!("{}; 3-blob MoI power {p:.1} vs awvd {w:.1} ({:.0}% lower)", notes.join(", "), 100.0 * (1.0 - p / w)))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("golden 4-node, h = identity", golden_identity, Duration::from_secs(1)),
        ("golden 4-node, h = square", golden_square, Duration::from_secs(1)),
        ("vertex sparsity and duality gap", vertex_sparsity, Duration::from_secs(60)),
        ("tree rounding bound", rounding_bounds, Duration::from_secs(60)),
        ("brute-force oracle equivalence", oracle_equivalence, Duration::from_secs(30)),
        ("shortest-path star-shapedness", star_shapedness, Duration::from_secs(120)),
        ("moment identity and k-means monotonicity", moment_identity_and_monotone, Duration::from_secs(60)),
        ("500-point pipeline, all approaches", fig2_pipeline, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err(String::from("panicked")));
        let elapsed = start.elapsed();
        let result = match result {
            Ok(msg) if elapsed > limit => Err(format!("{msg}; took {:.2}s, limit {}s", elapsed.as_secs_f64(), limit.as_secs())),
            other => other,
        };
        match result {
            Ok(msg) => println!("PASS  {name} ({:.2}s): {msg}", elapsed.as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {name} ({:.2}s): {msg}", elapsed.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
