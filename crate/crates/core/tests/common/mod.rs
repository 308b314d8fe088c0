//! Shared helpers: an independent byte-level builder for the checked-in
//! capture fixtures, and the brute-force references used by several suites.
#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const DST_MAC: [u8; 6] = [0x00, 0x11, 0x22, 0x33, 0x44, 0x55];
const SRC_MAC: [u8; 6] = [0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb];

fn eth(dst: [u8; 6], ethertype: u16) -> Vec<u8> {
    let mut v = dst.to_vec();
    v.extend(SRC_MAC);
    v.extend(ethertype.to_be_bytes());
    v
}

#[allow(clippy::too_many_arguments)]
fn ipv4(proto: u8, total: u16, ident: u16, frag: u16, ttl: u8, src: [u8; 4], dst: [u8; 4]) -> Vec<u8> {
    let mut v = vec![0x45, 0];
    v.extend(total.to_be_bytes());
    v.extend(ident.to_be_bytes());
    v.extend(frag.to_be_bytes());
    v.extend([ttl, proto, 0, 0]);
    v.extend(src);
    v.extend(dst);
    v
}

fn tcp(src: u16, dst: u16, seq: u32, ack: u32, offset_byte: u8, flags: u8, window: u16) -> Vec<u8> {
    let mut v = Vec::new();
    v.extend(src.to_be_bytes());
    v.extend(dst.to_be_bytes());
    v.extend(seq.to_be_bytes());
    v.extend(ack.to_be_bytes());
    v.extend([offset_byte, flags]);
    v.extend(window.to_be_bytes());
    v.extend([0, 0, 0, 0]);
    v
}

fn pad(mut v: Vec<u8>, to: usize) -> Vec<u8> {
    v.resize(to.max(v.len()), 0);
    v
}

/// TCP SYN 192.168.1.10:40000 -> 192.168.1.20:23, DF, TTL 64.
pub fn telnet_syn() -> Vec<u8> {
    let mut f = eth(DST_MAC, 0x0800);
    f.extend(ipv4(6, 40, 0x1c46, 0x4000, 64, [192, 168, 1, 10], [192, 168, 1, 20]));
    f.extend(tcp(40000, 23, 1, 0, 0x50, 0x02, 64240));
    f
}

/// The five frames of `mixed.pcap`: TCP SYN, padded UDP, padded ARP,
/// IPv6/UDP, and a PSH-ACK with timestamp options and a 5-byte payload.
pub fn mixed_frames() -> Vec<Vec<u8>> {
    let mut udp = eth(DST_MAC, 0x0800);
    udp.extend(ipv4(17, 32, 1, 0, 128, [10, 0, 0, 5], [8, 8, 8, 8]));
    udp.extend([0x14, 0xe9, 0x00, 0x35, 0x00, 0x0c, 0, 0, 0xde, 0xad, 0xbe, 0xef]);

    let mut arp = eth([0xff; 6], 0x0806);
    arp.extend([0, 1, 0x08, 0x00, 6, 4, 0, 1]);
    arp.extend(SRC_MAC);
    arp.extend([192, 168, 1, 10]);
    arp.extend([0; 6]);
    arp.extend([192, 168, 1, 1]);

    let mut v6 = eth(DST_MAC, 0x86dd);
    v6.extend([0x60, 0, 0, 0, 0, 8, 17, 64]);
    for last in [1u8, 2] {
        let mut a = [0u8; 16];
        a[0] = 0xfe;
        a[1] = 0x80;
        a[15] = last;
        v6.extend(a);
    }
    v6.extend([0x02, 0x22, 0x02, 0x23, 0x00, 0x08, 0, 0]);

    let mut push = eth(DST_MAC, 0x0800);
    push.extend(ipv4(6, 57, 0x1c46, 0x4000, 52, [203, 0, 113, 7], [192, 168, 1, 10]));
    push.extend(tcp(23, 40000, 1000, 2, 0x80, 0x18, 502));
    push.extend([1, 1, 8, 10]);
    push.extend(12345u32.to_be_bytes());
    push.extend(67890u32.to_be_bytes());
    push.extend(b"login");

    vec![telnet_syn(), pad(udp, 60), pad(arp, 60), v6, push]
}

/// Classic pcap container. `caps[i]` truncates the stored bytes of frame `i`.
pub fn pcap(frames: &[Vec<u8>], big_endian: bool, nanos: bool, caps: &[Option<usize>]) -> Vec<u8> {
    let w32 = |v: &mut Vec<u8>, x: u32| v.extend(if big_endian { x.to_be_bytes() } else { x.to_le_bytes() });
    let w16 = |v: &mut Vec<u8>, x: u16| v.extend(if big_endian { x.to_be_bytes() } else { x.to_le_bytes() });
    let mut out = Vec::new();
    w32(&mut out, if nanos { 0xa1b2_3c4d } else { 0xa1b2_c3d4 });
    w16(&mut out, 2);
    w16(&mut out, 4);
    w32(&mut out, 0);
    w32(&mut out, 0);
    w32(&mut out, 65535);
    w32(&mut out, 1);
    for (i, f) in frames.iter().enumerate() {
        let stored = caps.get(i).copied().flatten().unwrap_or(f.len());
        w32(&mut out, 1_600_000_000 + i as u32);
        w32(&mut out, (i as u32 + 1) * if nanos { 1000 } else { 1 });
        w32(&mut out, stored as u32);
        w32(&mut out, f.len() as u32);
        out.extend(&f[..stored]);
    }
    out
}

/// Confusion-free reference for weighted scores: per-class counts by
/// enumeration, support-weighted averages.
pub fn reference_scores(pred: &[u8], truth: &[u8]) -> (f64, f64, f64, f64) {
    let n = truth.len() as f64;
    let acc = pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / n;
    let (mut prec, mut rec, mut f1) = (0.0, 0.0, 0.0);
    for class in [0u8, 1] {
        let support = truth.iter().filter(|&&t| t == class).count() as f64;
        let predicted = pred.iter().filter(|&&p| p == class).count() as f64;
        let hit = pred.iter().zip(truth).filter(|(p, t)| **p == class && **t == class).count() as f64;
        let p = if predicted > 0.0 { hit / predicted } else { 0.0 };
        let r = if support > 0.0 { hit / support } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        prec += support / n * p;
        rec += support / n * r;
        f1 += support / n * f;
    }
    (acc, prec, rec, f1)
}
