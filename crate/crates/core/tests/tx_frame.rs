use num_complex::Complex64;
use proptest::prelude::*;
use radcom_core::comm_rx::{receive, RxOptions};
use radcom_core::dsp::UnitaryDft;
use radcom_core::ldpc::LdpcCode;
use radcom_core::tx::{
    assemble_frame, build_preamble, demap_qpsk_hard, encode_payload, info_capacity, map_qpsk, modulate,
    ofdm_demodulate, random_bits, transmit, ElementKind,
};
use radcom_core::{Error, FrameConfig, IqStream};

fn small() -> FrameConfig {
    FrameConfig {
        n_subcarriers: 256,
        cp_len: 64,
        m_payload: 32,
        ..FrameConfig::short_pl()
    }
}

#[test]
fn preamble_pairs_are_identical() {
    let cfg = FrameConfig::long_pl();
    let p = build_preamble(&cfg);
    assert_eq!(p.symbols.len(), 12);
    for i in (2..12).step_by(2) {
        assert_eq!(p.symbols[i], p.symbols[i + 1], "pair {i}");
        if i + 2 < 12 {
            assert_ne!(p.symbols[i], p.symbols[i + 2]);
        }
    }
    assert_eq!(build_preamble(&cfg).symbols, p.symbols);
}

#[test]
fn first_sc_symbol_has_identical_halves() {
    let cfg = small();
    let mut s = build_preamble(&cfg).symbols[0].clone();
    UnitaryDft::new(cfg.n_subcarriers).inverse(&mut s);
    let (a, b) = s.split_at(cfg.n_subcarriers / 2);
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).norm() < 1e-12);
    }
}

#[test]
fn zero_block_encodes_to_zero_codeword() {
    let code = LdpcCode::rate_2_3();
    let c = code.encode(&vec![0; code.k()]);
    assert!(c.iter().all(|&b| b == 0));
}

#[test]
fn oversized_payload_reports_capacity() {
    let cfg = small();
    let cap = info_capacity(&cfg);
    match encode_payload(&vec![0; cap + 1], &cfg) {
        Err(Error::Capacity { max_info_bits, .. }) => assert_eq!(max_info_bits, cap),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn thousand_bits_survive_noiseless_loopback() {
    let cfg = small();
    let bits = random_bits(1000, 77);
    let tx = transmit(&cfg, &bits).unwrap();
    assert_eq!(tx.payload.codeword_count, 1);
    let start = cfg.m_preamble() * cfg.symbol_len();
    let payload = IqStream::new(tx.stream.samples[start..].to_vec(), cfg.bandwidth_hz);
    let out = receive(&payload, &cfg, &RxOptions::default(), 1000, Some(&bits)).unwrap();
    assert_eq!(out.decoded.info_bits, bits);
}

#[test]
fn qpsk_mapping_definition() {
    let s = map_qpsk(&[0, 0, 0, 1, 1, 0, 1, 1]).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    assert_eq!(s[0], Complex64::new(r, r));
    assert_eq!(s[1], Complex64::new(r, -r));
    assert_eq!(s[2], Complex64::new(-r, r));
    assert_eq!(s[3], Complex64::new(-r, -r));
    let mean: Complex64 = s.iter().sum::<Complex64>() / 4.0;
    let power: f64 = s.iter().map(|v| v.norm_sqr()).sum::<f64>() / 4.0;
    assert!(mean.norm() < 1e-15 && (power - 1.0).abs() < 1e-15);
    assert!(matches!(map_qpsk(&[1, 0, 1]), Err(Error::Framing(_))));
}

#[test]
fn long_pl_grid_dimensions_and_pilots() {
    let cfg = FrameConfig::long_pl();
    let data = vec![Complex64::new(1.0, 0.0); cfg.data_capacity()];
    let f = assemble_frame(&cfg, &data).unwrap();
    assert_eq!((f.grid.rows(), f.grid.cols()), (2048, 4108));
    assert_eq!(f.count(ElementKind::Pilot), 1_048_576);
}

#[test]
fn unit_spacing_leaves_no_data() {
    let cfg = FrameConfig {
        pilot_freq_spacing: 1,
        pilot_time_spacing: 1,
        ..small()
    };
    assert_eq!(cfg.data_capacity(), 0);
    let f = assemble_frame(&cfg, &[]).unwrap();
    assert_eq!(f.count(ElementKind::Data), 0);
    assert!(assemble_frame(&cfg, &[Complex64::new(1.0, 0.0)]).is_err());
}

#[test]
fn masks_partition_the_grid() {
    let cfg = small();
    let f = transmit(&cfg, &random_bits(100, 1)).unwrap().frame;
    let total: usize = [ElementKind::ScPreamble, ElementKind::SfoPreamble, ElementKind::Pilot, ElementKind::Data]
        .iter()
        .map(|&k| f.count(k))
        .sum();
    assert_eq!(total, cfg.n_subcarriers * cfg.m_total());
    assert_eq!(f.count(ElementKind::Data), cfg.data_capacity());
    for m in 0..cfg.m_total() {
        for k in 0..cfg.n_subcarriers {
            let pilot = m >= cfg.m_preamble()
                && k % cfg.pilot_freq_spacing == 0
                && (m - cfg.m_preamble()) % cfg.pilot_time_spacing == 0;
            assert_eq!(f.kind(k, m) == ElementKind::Pilot, pilot);
        }
    }
}

#[test]
fn parseval_under_unitary_normalization() {
    let cfg = small();
    let tx = transmit(&cfg, &random_bits(info_capacity(&cfg), 4)).unwrap();
    let freq: f64 = tx.frame.grid.as_slice().iter().map(|v| v.norm_sqr()).sum::<f64>()
        / tx.frame.grid.as_slice().len() as f64;
    // Each symbol's body carries the frequency-domain energy; the CP repeats part of it.
    let body: f64 = tx
        .stream
        .samples
        .chunks(cfg.symbol_len())
        .flat_map(|s| &s[cfg.cp_len..])
        .map(|v| v.norm_sqr())
        .sum::<f64>()
        / (cfg.n_subcarriers * cfg.m_total()) as f64;
    assert!((freq - body).abs() < 1e-12);
    assert!((freq - 1.0).abs() < 1e-12);
}

fn config() -> impl Strategy<Value = FrameConfig> {
    (4u32..9, 1usize..4, 1usize..9, 0u32..2, 0u32..3).prop_map(|(log_n, cpdiv, mpl, ldn, ldm)| FrameConfig {
        n_subcarriers: 1 << log_n,
        cp_len: (1 << log_n) / (cpdiv + 1),
        m_sc: 2,
        m_sfo: 2,
        m_payload: mpl << ldm,
        pilot_freq_spacing: 1 << ldn,
        pilot_time_spacing: 1 << ldm,
        ..FrameConfig::short_pl()
    })
}

fn random_symbols(n: usize, seed: u64) -> Vec<Complex64> {
    map_qpsk(&random_bits(2 * n, seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn qpsk_round_trip(bits in prop::collection::vec(0u8..2, 0..400).prop_filter("even", |b| b.len() % 2 == 0)) {
        prop_assert_eq!(demap_qpsk_hard(&map_qpsk(&bits).unwrap()), bits);
    }

    #[test]
    fn modulation_round_trip_and_cp(cfg in config(), seed in any::<u64>()) {
        let data = random_symbols(cfg.data_capacity(), seed);
        let f = assemble_frame(&cfg, &data).unwrap();
        let s = modulate(&f);
        prop_assert_eq!(s.len(), cfg.symbol_len() * cfg.m_total());
        for sym in s.samples.chunks(cfg.symbol_len()) {
            prop_assert_eq!(&sym[..cfg.cp_len], &sym[cfg.n_subcarriers..]);
        }
        let back = ofdm_demodulate(&s.samples, cfg.n_subcarriers, cfg.cp_len).unwrap();
        prop_assert!(back.max_relative_error(&f.grid) < 1e-10);
    }

    #[test]
    fn ldpc_codewords_satisfy_parity(seed in any::<u64>()) {
        let code = LdpcCode::rate_2_3();
        let info = random_bits(code.k(), seed);
        let c = code.encode(&info);
        prop_assert!(code.is_codeword(&c));
        prop_assert_eq!(&c[..code.k()], &info[..]);
    }

    #[test]
    fn transmit_is_deterministic(seed in any::<u64>()) {
        let cfg = small();
        let bits = random_bits(500, seed);
        prop_assert_eq!(transmit(&cfg, &bits).unwrap().stream, transmit(&cfg, &bits).unwrap().stream);
    }
}
