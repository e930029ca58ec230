#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

/// Serves one scripted `(status, body)` reply per connection, then stops.
/// Returns the base URL, the captured request bodies and the server thread.
pub fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, seen, handle)
}

use std::collections::{BTreeMap, BTreeSet};

use eventschema::finalize::WeightedDigraph;
use eventschema::schema::SchemaGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gold_schemas() -> Vec<(String, SchemaGraph)> {
    let mut out: Vec<(String, SchemaGraph)> = std::fs::read_dir(data("gold"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let g = SchemaGraph::from_json(&std::fs::read_to_string(&p).unwrap()).unwrap();
            (p.file_name().unwrap().to_string_lossy().into_owned(), g)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Every ordering of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let x = left.remove(i);
            prefix.push(x);
            go(prefix, left, out);
            prefix.pop();
            left.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Random digraph on `0..n`; 2-cycles allowed.
pub fn random_digraph(r: &mut impl Rng, n: usize, p: f64, weighted: bool) -> WeightedDigraph<usize> {
    let mut g = WeightedDigraph::from_parts(0..n, []);
    for a in 0..n {
        for b in 0..n {
            if a != b && r.gen_bool(p) {
                let w = if weighted { (r.gen_range(1..=100) as f64) / 100.0 } else { 1.0 };
                g.add_edge(a, b, w);
            }
        }
    }
    g
}

/// Random weighted tournament on `0..n`.
pub fn random_tournament(r: &mut impl Rng, n: usize) -> WeightedDigraph<usize> {
    let mut g = WeightedDigraph::from_parts(0..n, []);
    for a in 0..n {
        for b in a + 1..n {
            let w = (r.gen_range(1..=100) as f64) / 100.0;
            if r.gen_bool(0.5) {
                g.add_edge(a, b, w);
            } else {
                g.add_edge(b, a, w);
            }
        }
    }
    g
}

/// Connected unit-weight digraph with no 2-cycles, `n >= 2`.
pub fn random_oriented_connected(r: &mut impl Rng, n: usize, p: f64) -> WeightedDigraph<usize> {
    let mut pairs = BTreeSet::new();
    for v in 1..n {
        pairs.insert((r.gen_range(0..v), v));
    }
    for a in 0..n {
        for b in a + 1..n {
            if r.gen_bool(p) {
                pairs.insert((a, b));
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| if r.gen_bool(0.5) { (a, b, 1.0) } else { (b, a, 1.0) });
    WeightedDigraph::from_parts(0..n, edges.collect::<Vec<_>>())
}

/// Random DAG on `0..n` consistent with a shuffled order.
pub fn random_dag(r: &mut impl Rng, n: usize, p: f64) -> WeightedDigraph<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, r.gen_range(0..=i));
    }
    let mut g = WeightedDigraph::from_parts(0..n, []);
    for i in 0..n {
        for j in i + 1..n {
            if r.gen_bool(p) {
                g.add_edge(order[i], order[j], 1.0);
            }
        }
    }
    g
}

/// Weight of edges pointing backwards in `order`.
pub fn backward_weight(g: &WeightedDigraph<usize>, order: &[usize]) -> (f64, usize) {
    let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    g.edges()
        .filter(|(a, b, _)| pos[a] > pos[b])
        .fold((0.0, 0), |(w, c), (_, _, x)| (w + x, c + 1))
}

/// Minimum feedback-arc weight by trying every ordering.
pub fn brute_force_fas(g: &WeightedDigraph<usize>) -> f64 {
    permutations(g.node_count())
        .iter()
        .map(|p| backward_weight(g, p).0)
        .fold(f64::INFINITY, f64::min)
}

/// Edges of a DAG not implied by a longer path, via the transitive closure.
pub fn brute_force_reduction(g: &WeightedDigraph<usize>) -> BTreeSet<(usize, usize)> {
    let n = g.node_count();
    let mut reach = vec![vec![false; n]; n];
    for (a, b, _) in g.edges() {
        reach[*a][*b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    g.edges()
        .filter(|(a, b, _)| !(0..n).any(|w| w != **a && w != **b && reach[**a][w] && reach[w][**b]))
        .map(|(a, b, _)| (*a, *b))
        .collect()
}

/// Best total weight of a one-to-one assignment of the smaller side.
pub fn brute_force_assignment(w: &[Vec<f64>]) -> f64 {
    let (rows, cols) = (w.len(), w[0].len());
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| w[i][j]).collect()).collect();
        return brute_force_assignment(&t);
    }
    permutations(cols)
        .iter()
        .map(|p| (0..rows).map(|i| w[i][p[i]]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Jaro-Winkler from its definition: matches within floor(max/2) - 1,
/// half-transpositions (integer), prefix bonus of 0.1 per shared leading character
/// (up to 4) applied when Jaro exceeds 0.7.
pub fn jaro_winkler_oracle(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut b_used = vec![false; b.len()];
    let mut a_hits = Vec::new();
    for (i, ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        if let Some(j) = (lo..hi).find(|&j| !b_used[j] && b[j] == *ca) {
            b_used[j] = true;
            a_hits.push(*ca);
        }
    }
    let m = a_hits.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let b_hits: Vec<char> = b.iter().zip(&b_used).filter(|(_, u)| **u).map(|(c, _)| *c).collect();
    // Half the out-of-order count, rounded down as in Winkler's reference code.
    let t = (a_hits.iter().zip(&b_hits).filter(|(x, y)| x != y).count() / 2) as f64;
    let jaro = (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0;
    if jaro <= 0.7 {
        return jaro;
    }
    let l = a.iter().zip(&b).take(4).take_while(|(x, y)| x == y).count() as f64;
    jaro + 0.1 * l * (1.0 - jaro)
}

/// Edit distance by the textbook recursion, memoized on suffix positions.
pub fn levenshtein_oracle(a: &str, b: &str) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        if let Some(&d) = memo.get(&(a.len(), b.len())) {
            return d;
        }
        let d = if a[0] == b[0] {
            go(&a[1..], &b[1..], memo)
        } else {
            1 + go(&a[1..], b, memo).min(go(a, &b[1..], memo)).min(go(&a[1..], &b[1..], memo))
        };
        memo.insert((a.len(), b.len()), d);
        d
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    go(&a, &b, &mut BTreeMap::new())
}

/// All strings over `alphabet` with length at most `max_len`.
pub fn all_strings(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|s| alphabet.iter().map(move |c| format!("{s}{c}")))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}
