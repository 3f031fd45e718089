//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines are always shown.

mod common;

use std::net::IpAddr;
use std::time::{Duration, Instant};

use common::{assemble_bytes, close, flows_digest, random_flow, synthetic_capture};
use flowfeat::analysis::DatasetProfile;
use flowfeat::capture::craft::{ethernet_frame, L4};
use flowfeat::capture::writer::PcapWriter;
use flowfeat::capture::{LinkType, TcpFlags, Timestamp};
use flowfeat::evaluation::{challenge_score, classification_metrics, confusion, ConfusionMatrix};
use flowfeat::flow::{Direction, FlowConfig};
use flowfeat::labeling::{labels_from_filename, LabelSet, NamingScheme};
use flowfeat::plugins::tls::ClientHello;
use flowfeat::plugins::{
    byte_frequency, clump_features, feature_set, flowpic, partition_clumps, tls_features, AsnDb, AsnInfo, AsnLookup,
    FeatureSet, FeatureValue, FlowPicConfig, SetConfig,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `Ok` carries an optional note for the report line.
type Check = Result<String, String>;

/// Name, check and optional wall-clock limit.
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

// ---------------------------------------------------------------- 1

fn feature_set_lengths() -> Check {
    let mut rng = StdRng::seed_from_u64(1);
    let cfg = SetConfig::default();
    let expected = [
        (FeatureSet::M1Cnn, 784),
        (FeatureSet::M2Cnn, 784),
        (FeatureSet::Distiller, 912),
        (FeatureSet::MalDist, 982),
        (FeatureSet::M1Cnn278, 278),
        (FeatureSet::M1Cnn1296, 1296),
    ];
    for i in 0..50 {
        let flow = random_flow(&mut rng, if i < 5 { 1 } else { 80 });
        for (set, len) in expected {
            let r = feature_set(&flow, set, &cfg);
            ensure!(r.len() == len, "flow {i}: {set} has {} values, want {len}", r.len());
            ensure!(r.shape.len() == len, "flow {i}: {set} shape {}", r.shape);
            ensure!(
                r.values.iter().all(|v| v.as_f64().is_some()),
                "flow {i}: {set} not dense"
            );
        }
    }
    Ok(String::new())
}

// ---------------------------------------------------------------- 2

/// Run-length oracle: per scope, clump count and min/max/mean/std of clump
/// packet counts, byte totals and start-to-start gaps in ms.
fn clump_oracle(items: &[(Direction, f64, u32)]) -> Vec<Option<f64>> {
    let mut runs: Vec<(Direction, f64, f64, f64)> = Vec::new(); // dir, start, packets, bytes
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        let mut bytes = 0.0;
        while j < items.len() && items[j].0 == items[i].0 {
            bytes += f64::from(items[j].2);
            j += 1;
        }
        runs.push((items[i].0, items[i].1, (j - i) as f64, bytes));
        i = j;
    }
    let stats = |xs: &[f64]| -> [Option<f64>; 4] {
        if xs.is_empty() {
            return [None; 4];
        }
        let n = xs.len() as f64;
        let mut sorted = xs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        [
            Some(sorted[0]),
            Some(sorted[sorted.len() - 1]),
            Some(mean),
            Some(var.sqrt()),
        ]
    };
    let mut out = Vec::new();
    for scope in [None, Some(Direction::Forward), Some(Direction::Backward)] {
        let sel: Vec<_> = runs.iter().filter(|r| scope.is_none_or(|d| r.0 == d)).collect();
        out.push(Some(sel.len() as f64));
        let sizes: Vec<f64> = sel.iter().map(|r| r.2).collect();
        let lengths: Vec<f64> = sel.iter().map(|r| r.3).collect();
        let gaps: Vec<f64> = (1..sel.len()).map(|k| (sel[k].1 - sel[k - 1].1) * 1000.0).collect();
        out.extend(stats(&sizes));
        out.extend(stats(&lengths));
        out.extend(stats(&gaps));
    }
    out
}

fn clump_equivalence() -> Check {
    let mut rng = StdRng::seed_from_u64(2);
    for case in 0..1000 {
        let n = rng.random_range(0..120);
        let mut t = 0.0;
        let items: Vec<(Direction, f64, u32)> = (0..n)
            .map(|_| {
                t += rng.random_range(0.0..5.0);
                let d = if rng.random_bool(0.5) {
                    Direction::Forward
                } else {
                    Direction::Backward
                };
                (d, t, rng.random_range(40..1500))
            })
            .collect();
        let clumps = partition_clumps(items.iter().copied());
        ensure!(
            clumps.iter().map(|c| c.packet_count).sum::<usize>() == n,
            "case {case}: clumps do not cover all packets"
        );
        ensure!(
            clumps.windows(2).all(|w| w[0].direction != w[1].direction),
            "case {case}: adjacent clumps share a direction"
        );
        let got = clump_features(&clumps);
        let want = clump_oracle(&items);
        ensure!(
            got.len() == want.len(),
            "case {case}: {} values, oracle {}",
            got.len(),
            want.len()
        );
        for (k, (g, w)) in got.iter().zip(&want).enumerate() {
            match (g.as_f64(), w) {
                (None, None) => {}
                (Some(a), Some(b)) => ensure!(close(a, *b, 1e-9), "case {case} value {k}: {a} vs oracle {b}"),
                _ => return Err(format!("case {case} value {k}: {g:?} vs oracle {w:?}")),
            }
        }
    }
    Ok(String::new())
}

// ---------------------------------------------------------------- 3

fn mass_laws() -> Check {
    let mut rng = StdRng::seed_from_u64(3);
    let cfg = FlowPicConfig::default();
    for case in 0..1000 {
        let flow = random_flow(&mut rng, 60);
        let mut per_window = std::collections::BTreeMap::<u64, u64>::new();
        for p in &flow.packets {
            *per_window
                .entry((p.rel_time / cfg.window_seconds).floor() as u64)
                .or_default() += 1;
        }
        let hists = flowpic(&flow, &cfg);
        ensure!(hists.len() == per_window.len(), "case {case}: window count");
        for h in &hists {
            ensure!(
                h.total() == per_window[&h.window_index],
                "case {case}: window {} holds {} packets, histogram sums to {}",
                h.window_index,
                per_window[&h.window_index],
                h.total()
            );
        }
        let packets = rng.random_range(1..12);
        let bf = byte_frequency(&flow, packets).dense();
        let inspected: f64 = flow.packets.iter().take(packets).map(|p| p.payload.len() as f64).sum();
        ensure!(bf.iter().sum::<f64>() == inspected, "case {case}: byte_frequency mass");
    }
    Ok(String::new())
}

// ---------------------------------------------------------------- 4

fn flow_conservation() -> Check {
    const LIMIT: Duration = Duration::from_secs(30);
    let mut rng = StdRng::seed_from_u64(4);
    let cases: Vec<(usize, Vec<u8>, FlowConfig)> = (0..100)
        .map(|_| {
            let packets = rng.random_range(1..=10_000);
            let tuples = rng.random_range(1..300);
            let bytes = synthetic_capture(&mut rng, packets, tuples);
            let config = FlowConfig {
                idle_timeout: rng.random_range(1.0..120.0),
                active_timeout: rng.random_range(10.0..1800.0),
                max_flows: rng.random_range(1..400),
                max_packets: rng.random_range(1..5_000),
                ..FlowConfig::default()
            };
            (packets, bytes, config)
        })
        .collect();

    let start = Instant::now();
    for (case, (packets, bytes, config)) in cases.iter().enumerate() {
        let a = assemble_bytes(bytes, config);
        ensure!(
            a.decoded == *packets as u64,
            "case {case}: decoded {} of {packets}",
            a.decoded
        );
        let emitted: u64 = a.flows.iter().map(|f| f.packets.len() as u64).sum();
        ensure!(
            emitted == a.decoded,
            "case {case}: {emitted} packets in flows, {} decoded",
            a.decoded
        );
        let b = assemble_bytes(bytes, config);
        ensure!(
            flows_digest(&a.flows) == flows_digest(&b.flows),
            "case {case}: rerun differs"
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed <= LIMIT, "pipeline took {elapsed:.2?}, limit {LIMIT:?}");
    Ok(format!("pipeline {elapsed:.2?} of {LIMIT:?}"))
}

// ---------------------------------------------------------------- 5

fn challenge_metric() -> Check {
    let cm = ConfusionMatrix::from_counts(vec!["mal".into(), "ben".into()], vec![vec![8, 2], vec![1, 9]]);
    let s = challenge_score(&cm, "mal").map_err(|e| e.to_string())?;
    let near = |v: Option<f64>, want: f64| v.is_some_and(|v| (v - want).abs() <= 1e-12);
    ensure!(near(s.tpr, 0.8), "TPR {:?}", s.tpr);
    ensure!(near(s.far, 0.1), "FAR {:?}", s.far);
    ensure!(near(s.score, 0.72), "score {:?}", s.score);
    let perfect = confusion(&["mal", "ben", "mal"], &["mal", "ben", "mal"]).map_err(|e| e.to_string())?;
    let s = challenge_score(&perfect, "mal").map_err(|e| e.to_string())?;
    ensure!(near(s.score, 1.0), "perfect detector score {:?}", s.score);
    Ok(String::new())
}

// ---------------------------------------------------------------- 6

fn labeling() -> Check {
    let scheme = NamingScheme::iscx();
    for (name, want) in [
        ("vpn_facebook_audio2.pcap", ["vpn", "facebook", "audio"]),
        ("skype_video2b.pcap", ["nonvpn", "skype", "video"]),
    ] {
        let got = labels_from_filename(name, &scheme);
        let got: Vec<(&str, &str)> = got.iter().collect();
        let want: Vec<(&str, &str)> = ["encapsulation", "app", "traffic"].into_iter().zip(want).collect();
        ensure!(got == want, "{name}: {got:?}");
    }
    Ok(String::new())
}

// ---------------------------------------------------------------- 7

/// ClientHello with 4 cipher suites and 3 extensions (server_name "a.test",
/// supported_groups x25519/secp256r1, ec_point_formats uncompressed).
fn client_hello_record() -> Vec<u8> {
    let mut body = vec![0x03, 0x03];
    body.extend_from_slice(&[0x11; 32]);
    body.push(0);
    let suites = [0x1301u16, 0x1302, 0xc02b, 0x002f];
    body.extend_from_slice(&((suites.len() * 2) as u16).to_be_bytes());
    suites.iter().for_each(|s| body.extend_from_slice(&s.to_be_bytes()));
    body.extend_from_slice(&[1, 0]);

    let mut exts = Vec::new();
    let host = b"a.test";
    let mut sni = Vec::new();
    sni.extend_from_slice(&((host.len() + 3) as u16).to_be_bytes());
    sni.push(0);
    sni.extend_from_slice(&(host.len() as u16).to_be_bytes());
    sni.extend_from_slice(host);
    let groups = [0, 4, 0x00, 0x1d, 0x00, 0x17];
    let formats = [1, 0];
    for (ty, data) in [(0u16, &sni[..]), (10, &groups[..]), (11, &formats[..])] {
        exts.extend_from_slice(&ty.to_be_bytes());
        exts.extend_from_slice(&(data.len() as u16).to_be_bytes());
        exts.extend_from_slice(data);
    }
    body.extend_from_slice(&(exts.len() as u16).to_be_bytes());
    body.extend_from_slice(&exts);

    let mut hs = vec![1];
    hs.extend_from_slice(&(body.len() as u32).to_be_bytes()[1..]);
    hs.extend_from_slice(&body);
    let mut record = vec![22, 3, 1];
    record.extend_from_slice(&(hs.len() as u16).to_be_bytes());
    record.extend_from_slice(&hs);
    record
}

// MD5 of "771,4865-4866-49195-47,0-10-11,29-23,0", computed with Python's hashlib.
const JA3_ORACLE: &str = "9199a9295edc06c2630b85dd9adfdab3";

fn tls_client_hello() -> Check {
    let record = client_hello_record();
    let hello = ClientHello::from_stream(&record).ok_or("fixture did not parse")?;
    ensure!(
        hello.cipher_suites.len() == 4,
        "cipher count {}",
        hello.cipher_suites.len()
    );
    ensure!(
        hello.extensions.len() == 3,
        "extension count {}",
        hello.extensions.len()
    );
    ensure!(hello.sni.as_deref() == Some("a.test"), "sni {:?}", hello.sni);
    ensure!(
        hello.ja3_digest() == JA3_ORACLE,
        "ja3 {} ({})",
        hello.ja3_digest(),
        hello.ja3_string()
    );

    // the same record carried in a TCP session
    let (c, s): (IpAddr, IpAddr) = ("10.0.0.1".parse().unwrap(), "10.0.0.2".parse().unwrap());
    let frames = [
        (c, s, L4::tcp(40000, 443, 100, TcpFlags::SYN), vec![]),
        (s, c, L4::tcp(443, 40000, 500, TcpFlags::SYN | TcpFlags::ACK), vec![]),
        (c, s, L4::tcp(40000, 443, 101, TcpFlags::ACK), vec![]),
        (c, s, L4::tcp(40000, 443, 101, TcpFlags::ACK | TcpFlags::PSH), record),
    ];
    let mut w = PcapWriter::new(Vec::new(), LinkType::Ethernet).unwrap();
    for (i, (src, dst, l4, payload)) in frames.iter().enumerate() {
        w.write_packet(
            Timestamp::from_micros(1_000 + i as u64),
            &ethernet_frame(*src, *dst, *l4, payload),
        )
        .unwrap();
    }
    let a = assemble_bytes(&w.into_inner(), &FlowConfig::default());
    ensure!(a.flows.len() == 1, "{} flows", a.flows.len());
    let r = tls_features(&a.flows[0]);
    let num = |name: &str| r.get(name).and_then(FeatureValue::as_f64);
    ensure!(num("tls_is_tls") == Some(1.0), "not detected as TLS");
    ensure!(num("tls_ch_cipher_count") == Some(4.0), "flow cipher count");
    ensure!(num("tls_ch_extension_count") == Some(3.0), "flow extension count");
    ensure!(num("tls_ch_sni_len") == Some(6.0), "flow sni length");
    ensure!(
        r.get("tls_ja3") == Some(&FeatureValue::Text(JA3_ORACLE.into())),
        "flow ja3 {:?}",
        r.get("tls_ja3")
    );
    Ok(String::new())
}

// ---------------------------------------------------------------- 8

fn unopened_tcp() -> Check {
    let c: IpAddr = "10.0.0.1".parse().unwrap();
    let s: IpAddr = "10.0.0.2".parse().unwrap();
    let mut frames: Vec<(IpAddr, IpAddr, L4)> = Vec::new();
    for port in [1000u16, 1001] {
        frames.push((c, s, L4::tcp(port, 80, 1, TcpFlags::SYN)));
        frames.push((s, c, L4::tcp(80, port, 9, TcpFlags::SYN | TcpFlags::ACK)));
        frames.push((c, s, L4::tcp(port, 80, 2, TcpFlags::ACK)));
    }
    // mid-stream session without a handshake
    frames.push((c, s, L4::tcp(1002, 80, 77, TcpFlags::ACK | TcpFlags::PSH)));
    frames.push((s, c, L4::tcp(80, 1002, 88, TcpFlags::ACK)));
    frames.push((c, s, L4::udp(5000, 5001)));
    let mut w = PcapWriter::new(Vec::new(), LinkType::Ethernet).unwrap();
    for (i, (src, dst, l4)) in frames.into_iter().enumerate() {
        w.write_packet(
            Timestamp::from_micros(i as u64 * 1000),
            &ethernet_frame(src, dst, l4, b"data"),
        )
        .unwrap();
    }
    let a = assemble_bytes(&w.into_inner(), &FlowConfig::default());
    ensure!(a.flows.len() == 4, "{} flows", a.flows.len());
    let mut profile = DatasetProfile::new("app");
    let mut labels = LabelSet::default();
    labels.insert("app", "web");
    for f in &a.flows {
        profile.add(f, &labels);
    }
    let u = profile.unopened_total();
    ensure!(
        (u.unopened, u.tcp_flows) == (1, 3),
        "unopened {} of {}",
        u.unopened,
        u.tcp_flows
    );
    ensure!(u.ratio() == Some(1.0 / 3.0), "ratio {:?}", u.ratio());
    Ok(String::new())
}

// ---------------------------------------------------------------- 9

fn asn_lookup() -> Check {
    let db = "131.202.0.0\t131.202.255.255\t611\tCA\tNB-PEI-EDUCATION-COMPUTER-NETWORK - University of Toronto\n\
              178.237.16.0\t178.237.31.255\t47764\tRU\tMAILRU-AS Mail.Ru\n";
    let db = AsnDb::from_reader(db.as_bytes()).map_err(|e| e.to_string())?;
    ensure!(db.len() == 2, "{} entries", db.len());
    for (ip, num, code) in [("131.202.240.87", 611, "CA"), ("178.237.19.228", 47764, "RU")] {
        match db.lookup(ip.parse().unwrap()) {
            AsnLookup::Found(AsnInfo { num: n, code: c, .. }) if n == num && c == code => {}
            other => return Err(format!("{ip}: {other:?}")),
        }
    }
    Ok(String::new())
}

// ---------------------------------------------------------------- 10

fn metric_sanity() -> Check {
    let mut rng = StdRng::seed_from_u64(10);
    let classes = ["a", "b", "c", "d", "e"];
    let truth: Vec<&str> = (0..10_000).map(|_| classes[rng.random_range(0..5)]).collect();
    let pred: Vec<&str> = truth
        .iter()
        .map(|&t| {
            if rng.random_bool(0.7) {
                t
            } else {
                classes[rng.random_range(0..5)]
            }
        })
        .collect();
    let m = classification_metrics(&confusion(&truth, &pred).map_err(|e| e.to_string())?);

    let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
    ensure!(
        (m.accuracy - correct as f64 / 10_000.0).abs() <= 1e-12,
        "accuracy {}",
        m.accuracy
    );
    for c in &m.per_class {
        let k = c.class.as_str();
        let tp = truth.iter().zip(&pred).filter(|(t, p)| **t == k && **p == k).count() as f64;
        let predicted = pred.iter().filter(|p| **p == k).count() as f64;
        let actual = truth.iter().filter(|t| **t == k).count() as f64;
        let (p, r) = (tp / predicted, tp / actual);
        let f1 = 2.0 * p * r / (p + r);
        ensure!((c.precision - p).abs() <= 1e-12, "{k} precision {} vs {p}", c.precision);
        ensure!((c.recall - r).abs() <= 1e-12, "{k} recall {} vs {r}", c.recall);
        ensure!((c.f1 - f1).abs() <= 1e-12, "{k} f1 {} vs {f1}", c.f1);
    }

    // rename classes so their sorted order changes
    let rename = |s: &&str| match *s {
        "a" => "z",
        "b" => "y",
        "c" => "m",
        "d" => "b",
        _ => "a",
    };
    let t2: Vec<&str> = truth.iter().map(rename).collect();
    let p2: Vec<&str> = pred.iter().map(rename).collect();
    let m2 = classification_metrics(&confusion(&t2, &p2).map_err(|e| e.to_string())?);
    ensure!(
        (m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1)
            == (m2.accuracy, m2.macro_precision, m2.macro_recall, m2.macro_f1),
        "macro metrics changed under class permutation"
    );
    ensure!(
        (m.weighted_precision, m.weighted_recall, m.weighted_f1)
            == (m2.weighted_precision, m2.weighted_recall, m2.weighted_f1),
        "weighted metrics changed under class permutation"
    );
    for c in &m.per_class {
        let renamed = rename(&c.class.as_str());
        let c2 = m2.per_class.iter().find(|x| x.class == renamed).ok_or("class lost")?;
        ensure!(
            (c.precision, c.recall, c.f1, c.support) == (c2.precision, c2.recall, c2.f1, c2.support),
            "class {} changed under permutation",
            c.class
        );
    }
    Ok(String::new())
}

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "feature-set lengths (784/912/982/278/1296)",
            feature_set_lengths,
            Some(Duration::from_secs(5)),
        ),
        (
            "clump oracle equivalence",
            clump_equivalence,
            Some(Duration::from_secs(10)),
        ),
        (
            "flowpic and byte_frequency mass laws",
            mass_laws,
            Some(Duration::from_secs(10)),
        ),
        ("flow packet conservation and determinism", flow_conservation, None),
        ("challenge metric TPR*(1-FAR)", challenge_metric, None),
        ("filename labeling with ISCX scheme", labeling, None),
        ("TLS ClientHello counts and JA3", tls_client_hello, None),
        ("unopened TCP ratio", unopened_tcp, None),
        ("ASN lookup", asn_lookup, None),
        (
            "classification metric oracle and permutation invariance",
            metric_sanity,
            None,
        ),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&result, limit) {
            if elapsed > *limit {
                result = Err(format!("took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        match result {
            Ok(note) if note.is_empty() => println!("criterion {:>2} PASS  {name} ({elapsed:.2?})", i + 1),
            Ok(note) => println!("criterion {:>2} PASS  {name} ({elapsed:.2?}; {note})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
