use std::collections::BTreeSet;

use ramdec_core::decoder::{best_path, decode, prune_lattice, write_lattice_text, DecodeConfig};
use ramdec_core::graph::parse_fst_text;
use ramdec_core::Error;
use ramdec_testkit::{
    acceptor_word_sequences, brute_force_best, brute_force_best_two, enumerate_lattice_paths,
    enumerate_lattice_paths_within, graph_accepts, random_instance,
};

const INSTANCES: u64 = 200;
const TOL: f64 = 1e-4;

#[test]
fn exhaustive_search_matches_enumeration() {
    let mut with_path = 0;
    for seed in 0..INSTANCES {
        let inst = random_instance(seed);
        let oracle = brute_force_best(&inst.graph, &inst.loglikes, 1.0);
        match decode(&inst.graph, &inst.loglikes, &DecodeConfig::exhaustive(1.0)) {
            Ok(lat) => {
                let r = best_path(&lat);
                match (oracle, r) {
                    (Some(best), Ok(r)) if !r.partial => {
                        with_path += 1;
                        assert!((r.cost - best).abs() < TOL, "seed {seed}: decoder {} vs oracle {best}", r.cost);
                    }
                    (None, Ok(r)) => assert!(r.partial, "seed {seed}: decoder found a path the oracle did not"),
                    (None, Err(_)) => {}
                    (o, r) => panic!("seed {seed}: oracle {o:?} vs decoder {r:?}"),
                }
            }
            Err(Error::BeamCollapse { .. }) => {
                assert!(oracle.is_none(), "seed {seed}: collapse although a path exists");
            }
            Err(e) => panic!("seed {seed}: {e}"),
        }
    }
    assert!(with_path > 40, "only {with_path} instances had complete paths");
}

#[test]
fn wider_beams_never_cost_more() {
    for seed in 0..INSTANCES {
        let inst = random_instance(seed);
        let cost = |beam: f32| {
            let cfg = DecodeConfig { beam, max_active: usize::MAX, lattice_beam: f32::INFINITY, acoustic_scale: 1.0 };
            decode(&inst.graph, &inst.loglikes, &cfg)
                .ok()
                .and_then(|lat| best_path(&lat).ok())
                .filter(|r| !r.partial)
                .map(|r| r.cost)
        };
        let beams = [1.0, 4.0, 16.0, f32::INFINITY];
        let costs: Vec<_> = beams.iter().map(|&b| cost(b)).collect();
        for i in 0..beams.len() {
            for j in i + 1..beams.len() {
                if let Some(narrow) = costs[i] {
                    let wide = costs[j].unwrap_or_else(|| panic!("seed {seed}: beam {} lost the result", beams[j]));
                    assert!(wide <= narrow + 1e-6, "seed {seed}: beam {} cost {wide} > beam {} cost {narrow}", beams[j], beams[i]);
                }
            }
        }
    }
}

#[test]
fn best_path_cost_is_sum_of_its_links() {
    for seed in 0..INSTANCES {
        let inst = random_instance(seed);
        let Ok(lat) = decode(&inst.graph, &inst.loglikes, &DecodeConfig { acoustic_scale: 1.0, ..Default::default() }) else {
            continue;
        };
        let r = best_path(&lat).unwrap();
        let mut sum: f64 = r.path.iter().map(|&i| lat.links()[i].cost()).sum();
        let end = lat.finals().iter().find(|f| f.0 == r.end_node).unwrap();
        sum += f64::from(end.1);
        assert!((sum - r.cost).abs() < 1e-5, "seed {seed}");
        let words: Vec<_> = r.path.iter().map(|&i| lat.links()[i].olabel).filter(|&o| o != 0).collect();
        assert_eq!(words, r.words);
        let mut node = 0;
        for &i in &r.path {
            assert_eq!(lat.links()[i].from, node);
            node = lat.links()[i].to;
        }
        assert_eq!(node, r.end_node);
    }
}

#[test]
fn pruned_links_lie_within_lattice_beam() {
    for seed in 0..INSTANCES {
        let inst = random_instance(seed);
        let Ok(lat) = decode(&inst.graph, &inst.loglikes, &DecodeConfig::exhaustive(1.0)) else { continue };
        let best = best_path(&lat).unwrap();
        for lattice_beam in [0.25f32, 1.0, 3.0] {
            let pruned = prune_lattice(&lat, lattice_beam);
            let kept = best_path(&pruned).unwrap();
            assert!((kept.cost - best.cost).abs() < 1e-9, "seed {seed}: best path lost");
            let paths = enumerate_lattice_paths_within(&pruned, best.cost + f64::from(lattice_beam) + TOL);
            let mut covered = vec![false; pruned.links().len()];
            for p in &paths {
                for &l in &p.links {
                    covered[l] = true;
                }
            }
            assert!(covered.iter().all(|&c| c), "seed {seed}, beam {lattice_beam}: link outside the beam");
        }
    }
}

#[test]
fn lattice_word_sequences_exist_in_graph() {
    for seed in 0..INSTANCES {
        let inst = random_instance(seed);
        let Ok(lat) = decode(&inst.graph, &inst.loglikes, &DecodeConfig { acoustic_scale: 1.0, ..Default::default() }) else {
            continue;
        };
        if lat.is_partial() {
            continue;
        }
        let lat = prune_lattice(&lat, 2.0);
        let sequences: BTreeSet<_> = enumerate_lattice_paths(&lat).into_iter().map(|p| p.words).collect();
        for words in sequences {
            assert!(graph_accepts(&inst.graph, lat.num_frames(), &words), "seed {seed}: {words:?} not in graph");
        }
    }
}

#[test]
fn lattice_text_reparses_as_acceptor() {
    for seed in 0..INSTANCES {
        let inst = random_instance(seed);
        let Ok(lat) = decode(&inst.graph, &inst.loglikes, &DecodeConfig { acoustic_scale: 1.0, ..Default::default() }) else {
            continue;
        };
        let lat = prune_lattice(&lat, 1.5);
        let text = write_lattice_text(&lat);
        assert_eq!(text, write_lattice_text(&lat));
        let acceptor: String = text
            .lines()
            .map(|line| {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() == 5 {
                    let cost = f[3].parse::<f32>().unwrap() + f[4].parse::<f32>().unwrap();
                    format!("{} {} {} {} {cost}\n", f[0], f[1], f[2], f[2])
                } else {
                    format!("{line}\n")
                }
            })
            .collect();
        let g = parse_fst_text(&acceptor).unwrap();
        let from_text = acceptor_word_sequences(&g);
        let from_lattice: BTreeSet<_> = enumerate_lattice_paths(&lat).into_iter().map(|p| p.words).collect();
        assert_eq!(from_text, from_lattice, "seed {seed}");
    }
}

#[test]
fn uniform_scaling_keeps_the_best_words() {
    let mut checked = 0;
    for seed in 0..INSTANCES {
        let inst = random_instance(seed);
        // Unique optimum with a clear margin.
        match brute_force_best_two(&inst.graph, &inst.loglikes, 1.0) {
            [Some(a), Some(b)] if b - a >= 1e-3 => {}
            [Some(_), None] => {}
            _ => continue,
        }
        let base = best_path(&decode(&inst.graph, &inst.loglikes, &DecodeConfig::exhaustive(1.0)).unwrap()).unwrap();
        for c in [0.5f32, 3.0] {
            let text: String = inst
                .graph
                .to_text()
                .lines()
                .map(|line| {
                    let mut f: Vec<String> = line.split_whitespace().map(String::from).collect();
                    let w = f.last_mut().unwrap();
                    *w = (w.parse::<f32>().unwrap() * c).to_string();
                    f.join(" ") + "\n"
                })
                .collect();
            let scaled = parse_fst_text(&text).unwrap();
            let r = best_path(&decode(&scaled, &inst.loglikes, &DecodeConfig::exhaustive(c)).unwrap()).unwrap();
            assert_eq!(r.words, base.words, "seed {seed}, c {c}");
        }
        checked += 1;
    }
    assert!(checked > 20);
}
