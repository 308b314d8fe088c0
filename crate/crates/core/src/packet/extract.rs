use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packet::RawPacketView;

const ETHERNET_HEADER: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_ARP: u16 = 0x0806;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const VLAN_ETHERTYPES: [u16; 3] = [0x8100, 0x88a8, 0x9100];

const IPPROTO_ICMP: u8 = 1;
const IPPROTO_TCP: u8 = 6;
const IPPROTO_UDP: u8 = 17;

/// The twenty retained per-packet keys, in export column order.
///
/// Stream-derived analytics (`tcp.time_*`, `tcp.analysis.*`) and the window
/// scale factor are never computed here; they are always absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractedFields {
    pub frame_len: u32,
    pub frame_protocols: String,
    pub ip_len: Option<u16>,
    /// Top three bits of the flags/fragment word (`0x40` = don't fragment).
    pub ip_flags: Option<u8>,
    pub ip_ttl: Option<u8>,
    pub ip_proto: Option<u8>,
    pub ip_src: Option<Ipv4Addr>,
    pub ip_dst: Option<Ipv4Addr>,
    pub tcp_srcport: Option<u16>,
    pub tcp_dstport: Option<u16>,
    pub tcp_len: Option<u32>,
    pub tcp_hdr_len: Option<u8>,
    pub tcp_flags: Option<u16>,
    pub tcp_window_size_value: Option<u16>,
    pub tcp_window_size: Option<u32>,
    pub tcp_window_size_scalefactor: Option<i32>,
    pub tcp_time_relative: Option<f64>,
    pub tcp_time_delta: Option<f64>,
    pub tcp_analysis_bytes_in_flight: Option<u32>,
    pub tcp_analysis_push_bytes_sent: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    Ipv6,
    Vlan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Extracted {
    Record(ExtractedFields),
    Skipped(SkipReason),
}

fn need(bytes: &[u8], len: usize, layer: &'static str) -> Result<()> {
    if bytes.len() < len {
        return Err(Error::Truncated { index: 0, layer, needed: len, available: bytes.len() });
    }
    Ok(())
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

/// Decode one Ethernet frame into the retained fields.
///
/// IPv6 and VLAN-tagged frames come back as [`Extracted::Skipped`]. Frames
/// whose bytes end before a declared header length yield
/// [`Error::Truncated`] (the packet index is filled in by the caller).
pub fn extract(packet: &RawPacketView) -> Result<Extracted> {
    let frame = &packet.payload;
    need(frame, ETHERNET_HEADER, "ethernet")?;
    let ethertype = be16(frame, 12);

    let mut fields = ExtractedFields { frame_len: packet.original_len, ..Default::default() };

    match ethertype {
        ETHERTYPE_IPV6 => return Ok(Extracted::Skipped(SkipReason::Ipv6)),
        t if VLAN_ETHERTYPES.contains(&t) => return Ok(Extracted::Skipped(SkipReason::Vlan)),
        ETHERTYPE_ARP => fields.frame_protocols = "eth:ethertype:arp".into(),
        t if t < 0x0600 => fields.frame_protocols = "eth:llc".into(),
        ETHERTYPE_IPV4 => extract_ipv4(&frame[ETHERNET_HEADER..], &mut fields)?,
        _ => fields.frame_protocols = "eth:ethertype:data".into(),
    }
    Ok(Extracted::Record(fields))
}

fn extract_ipv4(ip: &[u8], fields: &mut ExtractedFields) -> Result<()> {
    need(ip, 20, "ipv4")?;
    let version = ip[0] >> 4;
    if version != 4 {
        return Err(Error::Format(format!("ethertype IPv4 carries IP version {version}")));
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    if ihl < 20 {
        return Err(Error::Format(format!("IPv4 header length {ihl} below minimum")));
    }
    need(ip, ihl, "ipv4")?;

    let total_len = be16(ip, 2);
    let frag_word = be16(ip, 6);
    let proto = ip[9];
    fields.ip_len = Some(total_len);
    fields.ip_flags = Some(ip[6] & 0xe0);
    fields.ip_ttl = Some(ip[8]);
    fields.ip_proto = Some(proto);
    fields.ip_src = Some(Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]));
    fields.ip_dst = Some(Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]));

    let first_fragment = frag_word & 0x1fff == 0;
    fields.frame_protocols = match proto {
        IPPROTO_TCP if first_fragment => {
            extract_tcp(&ip[ihl..], usize::from(total_len), ihl, fields)?;
            "eth:ethertype:ip:tcp"
        }
        IPPROTO_UDP if first_fragment => "eth:ethertype:ip:udp",
        IPPROTO_ICMP if first_fragment => "eth:ethertype:ip:icmp",
        _ => "eth:ethertype:ip",
    }
    .into();
    Ok(())
}

fn extract_tcp(tcp: &[u8], ip_total: usize, ihl: usize, fields: &mut ExtractedFields) -> Result<()> {
    need(tcp, 20, "tcp")?;
    let hdr_len = usize::from(tcp[12] >> 4) * 4;
    if hdr_len < 20 {
        return Err(Error::Format(format!("TCP data offset {hdr_len} below minimum")));
    }
    need(tcp, hdr_len, "tcp")?;

    let window = be16(tcp, 14);
    fields.tcp_srcport = Some(be16(tcp, 0));
    fields.tcp_dstport = Some(be16(tcp, 2));
    fields.tcp_hdr_len = Some(hdr_len as u8);
    fields.tcp_flags = Some((u16::from(tcp[12] & 0x0f) << 8) | u16::from(tcp[13]));
    fields.tcp_len = Some(ip_total.saturating_sub(ihl + hdr_len) as u32);
    fields.tcp_window_size_value = Some(window);
    // scale factor unknown without the handshake: calculated == raw
    fields.tcp_window_size = Some(u32::from(window));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(frame: Vec<u8>) -> RawPacketView {
        RawPacketView {
            ts_sec: 0,
            ts_frac: 0,
            captured_len: frame.len() as u32,
            original_len: frame.len() as u32,
            payload: frame,
        }
    }

    fn eth(ethertype: u16) -> Vec<u8> {
        let mut f = vec![0x02, 0, 0, 0, 0, 1, 0x02, 0, 0, 0, 0, 2];
        f.extend(ethertype.to_be_bytes());
        f
    }

    fn ipv4(proto: u8, total_len: u16) -> Vec<u8> {
        let mut h = vec![0x45, 0, 0, 0, 0, 1, 0x40, 0, 64, proto, 0, 0, 192, 168, 1, 10, 10, 0, 0, 1];
        h[2..4].copy_from_slice(&total_len.to_be_bytes());
        h
    }

    fn tcp(src: u16, dst: u16) -> Vec<u8> {
        let mut t = vec![0u8; 20];
        t[0..2].copy_from_slice(&src.to_be_bytes());
        t[2..4].copy_from_slice(&dst.to_be_bytes());
        t[12] = 0x50;
        t[13] = 0x12;
        t[14..16].copy_from_slice(&8192u16.to_be_bytes());
        t
    }

    #[test]
    fn minimal_tcp_frame() {
        let mut f = eth(0x0800);
        f.extend(ipv4(6, 40));
        f.extend(tcp(23, 49152));
        assert_eq!(f.len(), 54);
        let Extracted::Record(r) = extract(&view(f)).unwrap() else { panic!() };
        assert_eq!(r.frame_len, 54);
        assert_eq!(r.frame_protocols, "eth:ethertype:ip:tcp");
        assert_eq!(r.ip_len, Some(40));
        assert_eq!(r.ip_ttl, Some(64));
        assert_eq!(r.ip_proto, Some(6));
        assert_eq!(r.ip_flags, Some(0x40));
        assert_eq!(r.tcp_srcport, Some(23));
        assert_eq!(r.tcp_dstport, Some(49152));
        assert_eq!(r.tcp_len, Some(0));
        assert_eq!(r.tcp_hdr_len, Some(20));
        assert_eq!(r.tcp_flags, Some(0x012));
        assert_eq!(r.tcp_window_size_value, Some(8192));
        assert!(r.tcp_time_delta.is_none() && r.tcp_analysis_bytes_in_flight.is_none());
    }

    #[test]
    fn arp_has_frame_fields_only() {
        let mut f = eth(0x0806);
        f.extend([0u8; 28]);
        let Extracted::Record(r) = extract(&view(f)).unwrap() else { panic!() };
        assert_eq!(r.frame_len, 42);
        assert_eq!(r.frame_protocols, "eth:ethertype:arp");
        assert_eq!(
            r,
            ExtractedFields { frame_len: 42, frame_protocols: r.frame_protocols.clone(), ..Default::default() }
        );
    }

    #[test]
    fn udp_has_no_tcp_fields() {
        let mut f = eth(0x0800);
        f.extend(ipv4(17, 28));
        f.extend([0u8; 8]);
        let Extracted::Record(r) = extract(&view(f)).unwrap() else { panic!() };
        assert_eq!(r.frame_protocols, "eth:ethertype:ip:udp");
        assert_eq!(r.ip_proto, Some(17));
        assert!(r.tcp_srcport.is_none() && r.tcp_dstport.is_none() && r.tcp_len.is_none());
    }

    #[test]
    fn ipv6_and_vlan_are_skipped() {
        let mut f = eth(0x86dd);
        f.extend([0u8; 40]);
        assert_eq!(extract(&view(f)).unwrap(), Extracted::Skipped(SkipReason::Ipv6));
        let mut f = eth(0x8100);
        f.extend([0u8; 30]);
        assert_eq!(extract(&view(f)).unwrap(), Extracted::Skipped(SkipReason::Vlan));
    }

    #[test]
    fn truncated_tcp_header() {
        let mut f = eth(0x0800);
        f.extend(ipv4(6, 40));
        let mut t = tcp(80, 1234);
        t[12] = 0x80; // 32-byte header declared
        f.extend(t);
        match extract(&view(f)) {
            Err(Error::Truncated { layer, needed, available, .. }) => {
                assert_eq!(layer, "tcp");
                assert_eq!(needed, 32);
                assert_eq!(available, 20);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_ip_options() {
        let mut f = eth(0x0800);
        let mut ip = ipv4(6, 40);
        ip[0] = 0x46;
        f.extend(ip);
        assert!(matches!(extract(&view(f)), Err(Error::Truncated { layer: "ipv4", .. })));
        assert!(matches!(extract(&view(vec![0; 10])), Err(Error::Truncated { layer: "ethernet", .. })));
    }

    #[test]
    fn ip_options_shift_tcp() {
        let mut f = eth(0x0800);
        let mut ip = ipv4(6, 24 + 20 + 5);
        ip[0] = 0x46;
        ip.extend([1, 1, 1, 0]);
        f.extend(ip);
        f.extend(tcp(443, 5000));
        f.extend([7u8; 5]);
        let Extracted::Record(r) = extract(&view(f)).unwrap() else { panic!() };
        assert_eq!(r.tcp_srcport, Some(443));
        assert_eq!(r.tcp_len, Some(5));
    }
}
