//! Deterministic HDFS-style corpus generator.
//!
//! Normal lines come from routine datanode/namenode messages, anomalous lines
//! from failure messages. The two catalogs share no failure vocabulary, so a
//! word-level classifier can separate them.

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::dataset::{Label, LogRecord};

const NORMAL_TEMPLATES: &[&str] = &[
    "Receiving block {blk} src: /{ip}:{port} dest: /{ip}:{port}",
    "Received block {blk} of size {size} from /{ip}",
    "PacketResponder {n} for block {blk} terminating",
    "BLOCK* NameSystem.addStoredBlock: blockMap updated: {ip}:{port} is added to {blk} size {size}",
    "Verification succeeded for {blk}",
    "{ip}:{port} Served block {blk} to /{ip}",
    "BLOCK* NameSystem.allocateBlock: /user/root/rand/_temporary/_task_{n}_m_{n}/part-{n}. {blk}",
    "Deleting block {blk} file /mnt/hadoop/dfs/data/current/subdir{n}/{blk}",
    "BLOCK* ask {ip}:{port} to replicate {blk} to datanode(s) {ip}:{port}",
    "Replication of {blk} completed on {ip}:{port}",
];

const ANOMALY_TEMPLATES: &[&str] = &[
    "writeBlock {blk} received exception java.io.IOException: Could not read from stream",
    "PacketResponder {blk} {n} Exception java.io.InterruptedIOException: Interruped while waiting for IO on channel",
    "Exception in receiveBlock for block {blk} java.io.IOException: Connection reset by peer",
    "{ip}:{port}:DataXceiver: java.io.IOException: Block {blk} is valid, and cannot be written to.",
    "Unexpected error trying to delete block {blk}. BlockInfo not found in volumeMap.",
    "Write failed for block {blk} to mirror {ip}:{port} broken pipe",
    "BLOCK* NameSystem.addStoredBlock: Reported corrupt block {blk} on {ip}:{port} size {size}",
    "{ip}:{port}:Got exception while serving {blk} to /{ip}: java.net.SocketTimeoutException",
];

fn fill(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let end = start + rest[start..].find('}').expect("unterminated placeholder");
        match &rest[start + 1..end] {
            "blk" => {
                let id: i64 = rng.random();
                out.push_str(&format!("blk_{id}"));
            }
            "ip" => {
                let octets: [u8; 4] = [10, rng.random_range(0..=255), rng.random(), rng.random()];
                out.push_str(&format!("{}.{}.{}.{}", octets[0], octets[1], octets[2], octets[3]));
            }
            "port" => out.push_str(&rng.random_range(50000..50100u32).to_string()),
            "size" => out.push_str(&rng.random_range(1..67_108_864u64).to_string()),
            "n" => out.push_str(&rng.random_range(0..4u32).to_string()),
            other => panic!("unknown placeholder {other}"),
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    out
}

/// Generate `n_normal + n_anomaly` labeled records in shuffled order.
pub fn generate_synthetic_corpus(n_normal: usize, n_anomaly: usize, seed: u64) -> Vec<LogRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Normal, n_normal)
        .chain(std::iter::repeat_n(Label::Anomaly, n_anomaly))
        .collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let catalog = match label {
                Label::Normal => NORMAL_TEMPLATES,
                Label::Anomaly => ANOMALY_TEMPLATES,
            };
            let template = catalog[rng.random_range(0..catalog.len())];
            LogRecord::new(i + 1, &fill(template, &mut rng), Some(label))
        })
        .collect()
}
