//! ITU-T G.726 ADPCM at 16, 24, 32 and 40 kbit/s.
//!
//! Integer arithmetic follows the recommendation's block diagrams
//! (FMULT, quantizer, inverse quantizer, scale factor adaptation, adaptation
//! speed control, predictor updates, tone and transition detectors). Values
//! the recommendation keeps in 16-bit registers, the signal estimate
//! accumulator included, are truncated the same way here. Uniform PCM input
//! is 14-bit (`i16 >> 2`); A-law and mu-law inputs are expanded per G.711,
//! and log-PCM decoder output applies synchronous coding adjustment.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum G726Rate {
    #[serde(rename = "16k")]
    Kbps16,
    #[serde(rename = "24k")]
    Kbps24,
    #[serde(rename = "32k")]
    Kbps32,
    #[serde(rename = "40k")]
    Kbps40,
}

impl G726Rate {
    pub fn bits(self) -> u32 {
        match self {
            G726Rate::Kbps16 => 2,
            G726Rate::Kbps24 => 3,
            G726Rate::Kbps32 => 4,
            G726Rate::Kbps40 => 5,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        Ok(match bits {
            2 => G726Rate::Kbps16,
            3 => G726Rate::Kbps24,
            4 => G726Rate::Kbps32,
            5 => G726Rate::Kbps40,
            _ => return Err(config_err!("unsupported G.726 code size {bits}")),
        })
    }

    fn tables(self) -> &'static RateTables {
        match self {
            G726Rate::Kbps16 => &TABLES_16,
            G726Rate::Kbps24 => &TABLES_24,
            G726Rate::Kbps32 => &TABLES_32,
            G726Rate::Kbps40 => &TABLES_40,
        }
    }
}

impl std::str::FromStr for G726Rate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_end_matches("bps").trim_end_matches("bit/s") {
            "16k" | "16" | "16000" => Ok(G726Rate::Kbps16),
            "24k" | "24" | "24000" => Ok(G726Rate::Kbps24),
            "32k" | "32" | "32000" => Ok(G726Rate::Kbps32),
            "40k" | "40" | "40000" => Ok(G726Rate::Kbps40),
            other => Err(config_err!("unsupported G.726 mode {other:?}; use 16k, 24k, 32k or 40k")),
        }
    }
}

/// G.711 companding law for log-PCM input and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogLaw {
    ALaw,
    MuLaw,
}

struct RateTables {
    /// Decision levels of the log-domain quantizer.
    quant: &'static [i32],
    dqln: &'static [i32],
    /// Scale factor multipliers, already scaled to the `y` register.
    wi: &'static [i32],
    fi: &'static [i32],
}

static TABLES_16: RateTables = RateTables {
    quant: &[261],
    dqln: &[116, 365, 365, 116],
    wi: &[-704, 14048, 14048, -704],
    fi: &[0, 0xE00, 0xE00, 0],
};

static TABLES_24: RateTables = RateTables {
    quant: &[8, 218, 331],
    dqln: &[-2048, 135, 273, 373, 373, 273, 135, -2048],
    wi: &[-128, 960, 4384, 18624, 18624, 4384, 960, -128],
    fi: &[0, 0x200, 0x400, 0xE00, 0xE00, 0x400, 0x200, 0],
};

static TABLES_32: RateTables = RateTables {
    quant: &[-124, 80, 178, 246, 300, 349, 400],
    dqln: &[
        -2048, 4, 135, 213, 273, 323, 373, 425, 425, 373, 323, 273, 213, 135, 4, -2048,
    ],
    wi: &[
        -384, 576, 1312, 2048, 3584, 6336, 11360, 35904, 35904, 11360, 6336, 3584, 2048, 1312,
        576, -384,
    ],
    fi: &[
        0, 0, 0, 0x200, 0x200, 0x200, 0x600, 0xE00, 0xE00, 0x600, 0x200, 0x200, 0x200, 0, 0, 0,
    ],
};

static TABLES_40: RateTables = RateTables {
    quant: &[
        -122, -16, 68, 139, 198, 250, 298, 339, 378, 413, 445, 475, 502, 528, 553,
    ],
    dqln: &[
        -2048, -66, 28, 104, 169, 224, 274, 318, 358, 395, 429, 459, 488, 514, 539, 566, 566, 539,
        514, 488, 459, 429, 395, 358, 318, 274, 224, 169, 104, 28, -66, -2048,
    ],
    wi: &[
        448, 448, 768, 1248, 1280, 1312, 1856, 3200, 4512, 5728, 7008, 8960, 11456, 14080, 16928,
        22272, 22272, 16928, 14080, 11456, 8960, 7008, 5728, 4512, 3200, 1856, 1312, 1280, 1248,
        768, 448, 448,
    ],
    fi: &[
        0, 0, 0, 0, 0, 0x200, 0x200, 0x200, 0x200, 0x200, 0x400, 0x600, 0x800, 0xA00, 0xC00,
        0xC00, 0xC00, 0xC00, 0xA00, 0x800, 0x600, 0x400, 0x200, 0x200, 0x200, 0x200, 0x200, 0, 0,
        0, 0, 0,
    ],
};

/// Truncates to a 16-bit two's complement register.
#[inline]
fn short(v: i32) -> i32 {
    v as i16 as i32
}

/// Index of the first power of two strictly greater than `val` (0..=15).
#[inline]
fn quan_pow2(val: i32) -> i32 {
    (0..15).find(|&i| val < (1 << i)).unwrap_or(15)
}

/// Rounding used in the predictor multiply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FmultRounding {
    /// Adds `0x30` before the final 4-bit shift, as the recommendation does.
    #[default]
    Standard,
    /// Drops the rounding term, like libsndfile's G72x code.
    Truncate,
}

impl FmultRounding {
    fn offset(self) -> i32 {
        match self {
            FmultRounding::Standard => 0x30,
            FmultRounding::Truncate => 0,
        }
    }
}

/// Multiplies a predictor coefficient by a floating-point-coded sample.
fn fmult(an: i32, srn: i32, round: i32) -> i32 {
    let anmag = if an > 0 { an } else { (-an) & 0x1FFF };
    let anexp = quan_pow2(anmag) - 6;
    let anmant = if anmag == 0 {
        32
    } else if anexp >= 0 {
        anmag >> anexp
    } else {
        anmag << -anexp
    };
    let wanexp = anexp + ((srn >> 6) & 0xF) - 13;
    let wanmant = (anmant * (srn & 0o77) + round) >> 4;
    let retval = if wanexp >= 0 {
        (wanmant << wanexp) & 0x7FFF
    } else {
        wanmant >> -wanexp
    };
    if (an ^ srn) < 0 {
        -retval
    } else {
        retval
    }
}

/// Adaptive predictor and quantizer state shared by encoder and decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct G726State {
    yl: i32,
    yu: i32,
    dms: i32,
    dml: i32,
    ap: i32,
    a: [i32; 2],
    b: [i32; 6],
    pk: [i32; 2],
    dq: [i32; 6],
    sr: [i32; 2],
    td: i32,
    rounding: FmultRounding,
}

impl Default for G726State {
    fn default() -> Self {
        Self {
            yl: 34816,
            yu: 544,
            dms: 0,
            dml: 0,
            ap: 0,
            a: [0; 2],
            b: [0; 6],
            pk: [0; 2],
            dq: [32; 6],
            sr: [32; 2],
            td: 0,
            rounding: FmultRounding::Standard,
        }
    }
}

impl G726State {
    pub fn with_rounding(rounding: FmultRounding) -> Self {
        Self {
            rounding,
            ..Self::default()
        }
    }

    fn predictor_zero(&self) -> i32 {
        let r = self.rounding.offset();
        (0..6).map(|i| fmult(self.b[i] >> 2, self.dq[i], r)).sum()
    }

    fn predictor_pole(&self) -> i32 {
        let r = self.rounding.offset();
        fmult(self.a[1] >> 2, self.sr[1], r) + fmult(self.a[0] >> 2, self.sr[0], r)
    }

    fn step_size(&self) -> i32 {
        if self.ap >= 256 {
            return self.yu;
        }
        let mut y = self.yl >> 6;
        let dif = self.yu - y;
        let al = self.ap >> 2;
        if dif > 0 {
            y += (dif * al) >> 6;
        } else if dif < 0 {
            y += (dif * al + 0x3F) >> 6;
        }
        y
    }

    /// Signal estimate: returns `(se, sez)`.
    fn estimate(&self) -> (i32, i32) {
        let sezi = short(self.predictor_zero());
        let sez = sezi >> 1;
        let se = short(sezi + self.predictor_pole()) >> 1;
        (se, sez)
    }

    #[allow(clippy::too_many_arguments)]
    fn update(&mut self, bits: u32, y: i32, wi: i32, fi: i32, dq: i32, sr: i32, dqsez: i32) {
        let pk0 = i32::from(dqsez < 0);
        let mut mag = dq & 0x7FFF;

        // transition detector
        let ylint = self.yl >> 15;
        let ylfrac = (self.yl >> 10) & 0x1F;
        let thr1 = (32 + ylfrac) << ylint;
        let thr2 = if ylint > 9 { 31 << 10 } else { thr1 };
        let dqthr = (thr2 + (thr2 >> 1)) >> 1;
        let tr = self.td != 0 && mag > dqthr;

        // quantizer scale factor adaptation
        self.yu = (y + ((wi - y) >> 5)).clamp(544, 5120);
        self.yl += self.yu + ((-self.yl) >> 6);

        let mut a2p = 0;
        if tr {
            self.a = [0; 2];
            self.b = [0; 6];
        } else {
            let pks1 = pk0 ^ self.pk[0];

            a2p = self.a[1] - (self.a[1] >> 7);
            if dqsez != 0 {
                let fa1 = if pks1 != 0 { self.a[0] } else { -self.a[0] };
                if fa1 < -8191 {
                    a2p -= 0x100;
                } else if fa1 > 8191 {
                    a2p += 0xFF;
                } else {
                    a2p += fa1 >> 5;
                }
                if pk0 ^ self.pk[1] != 0 {
                    if a2p <= -12160 {
                        a2p = -12288;
                    } else if a2p >= 12416 {
                        a2p = 12288;
                    } else {
                        a2p -= 0x80;
                    }
                } else if a2p <= -12416 {
                    a2p = -12288;
                } else if a2p >= 12160 {
                    a2p = 12288;
                } else {
                    a2p += 0x80;
                }
            }
            a2p = short(a2p);
            self.a[1] = a2p;

            self.a[0] -= self.a[0] >> 8;
            if dqsez != 0 {
                if pks1 == 0 {
                    self.a[0] += 192;
                } else {
                    self.a[0] -= 192;
                }
            }
            let a1ul = 15360 - a2p;
            self.a[0] = self.a[0].clamp(-a1ul, a1ul);

            let leak = if bits == 5 { 9 } else { 8 };
            for cnt in 0..6 {
                self.b[cnt] -= self.b[cnt] >> leak;
                if dq & 0x7FFF != 0 {
                    if (dq ^ self.dq[cnt]) >= 0 {
                        self.b[cnt] += 128;
                    } else {
                        self.b[cnt] -= 128;
                    }
                }
                self.b[cnt] = short(self.b[cnt]);
            }
        }

        self.dq.copy_within(0..5, 1);
        // 4-bit exponent, 6-bit mantissa floating point
        self.dq[0] = if mag == 0 {
            if dq >= 0 {
                0x20
            } else {
                0x20 - 0x400
            }
        } else {
            let exp = quan_pow2(mag);
            let f = (exp << 6) + ((mag << 6) >> exp);
            if dq >= 0 {
                f
            } else {
                f - 0x400
            }
        };

        self.sr[1] = self.sr[0];
        self.sr[0] = if sr == 0 {
            0x20
        } else if sr > 0 {
            let exp = quan_pow2(sr);
            (exp << 6) + ((sr << 6) >> exp)
        } else if sr > -32768 {
            mag = -sr;
            let exp = quan_pow2(mag);
            (exp << 6) + ((mag << 6) >> exp) - 0x400
        } else {
            0x20 - 0x400
        };

        self.pk[1] = self.pk[0];
        self.pk[0] = pk0;

        // tone detector
        self.td = i32::from(!tr && a2p < -11776);

        // adaptation speed control
        self.dms = short(self.dms + ((fi - self.dms) >> 5));
        self.dml = short(self.dml + (((fi << 2) - self.dml) >> 7));

        if tr {
            self.ap = 256;
        } else if y < 1536
            || self.td == 1
            || ((self.dms << 2) - self.dml).abs() >= (self.dml >> 3)
        {
            self.ap += (0x200 - self.ap) >> 4;
        } else {
            self.ap += (-self.ap) >> 4;
        }
    }
}

/// Log-domain quantization of the prediction difference `d` with scale `y`.
fn quantize(d: i32, y: i32, rate: G726Rate) -> i32 {
    let table = rate.tables().quant;
    let size = table.len() as i32;
    let dqm = d.abs();
    let exp = quan_pow2(dqm >> 1);
    let mant = ((dqm << 7) >> exp) & 0x7F;
    let dl = (exp << 7) + mant;
    let dln = short(dl - (y >> 2));
    let i = table.iter().position(|&t| dln < t).unwrap_or(table.len()) as i32;
    if d < 0 {
        (size << 1) + 1 - i
    } else if i == 0 && rate != G726Rate::Kbps16 {
        // zero code is reserved; positive smallest magnitude maps to the
        // all-ones negative code
        (size << 1) + 1
    } else {
        i
    }
}

/// Inverse quantizer; negative results carry the sign in bit 15.
fn reconstruct(sign: bool, dqln: i32, y: i32) -> i32 {
    let dql = dqln + (y >> 2);
    if dql < 0 {
        return if sign { -0x8000 } else { 0 };
    }
    let dex = (dql >> 7) & 15;
    let dqt = 128 + (dql & 127);
    let dq = (dqt << 7) >> (14 - dex);
    if sign {
        dq - 0x8000
    } else {
        dq
    }
}

/// Shared decode step: returns `(sr, se, y)` after updating `state`.
fn step(state: &mut G726State, rate: G726Rate, code: i32) -> (i32, i32, i32) {
    let t = rate.tables();
    let bits = rate.bits();
    let code = code & ((1 << bits) - 1);
    let (se, sez) = state.estimate();
    let y = state.step_size();
    let dq = short(reconstruct(
        code & (1 << (bits - 1)) != 0,
        t.dqln[code as usize],
        y,
    ));
    let sr = short(if dq < 0 { se - (dq & 0x7FFF) } else { se + dq });
    let dqsez = short(sr + sez - se);
    state.update(bits, y, t.wi[code as usize], t.fi[code as usize], dq, sr, dqsez);
    (sr, se, y)
}

#[derive(Debug, Clone)]
pub struct G726Encoder {
    state: G726State,
    rate: G726Rate,
}

impl G726Encoder {
    pub fn new(rate: G726Rate) -> Self {
        Self::with_rounding(rate, FmultRounding::Standard)
    }

    pub fn with_rounding(rate: G726Rate, rounding: FmultRounding) -> Self {
        Self {
            state: G726State::with_rounding(rounding),
            rate,
        }
    }

    pub fn rate(&self) -> G726Rate {
        self.rate
    }

    pub fn state(&self) -> &G726State {
        &self.state
    }

    /// Encodes one 14-bit uniform sample (`-8192..=8191`).
    pub fn encode_14bit(&mut self, sl: i32) -> u8 {
        let (se, _) = self.state.estimate();
        let d = short(sl - se);
        let y = self.state.step_size();
        let code = quantize(d, y, self.rate);
        step(&mut self.state, self.rate, code);
        code as u8
    }

    pub fn encode_linear(&mut self, sample: i16) -> u8 {
        self.encode_14bit(i32::from(sample) >> 2)
    }

    pub fn encode_log(&mut self, sample: u8, law: LogLaw) -> u8 {
        match law {
            LogLaw::ALaw => self.encode_14bit(alaw_to_linear(sample) >> 2),
            LogLaw::MuLaw => self.encode_14bit(ulaw_to_linear(sample) >> 2),
        }
    }

    pub fn encode_block(&mut self, samples: &[i16]) -> Vec<u8> {
        samples.iter().map(|&s| self.encode_linear(s)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct G726Decoder {
    state: G726State,
    rate: G726Rate,
}

impl G726Decoder {
    pub fn new(rate: G726Rate) -> Self {
        Self::with_rounding(rate, FmultRounding::Standard)
    }

    pub fn with_rounding(rate: G726Rate, rounding: FmultRounding) -> Self {
        Self {
            state: G726State::with_rounding(rounding),
            rate,
        }
    }

    pub fn state(&self) -> &G726State {
        &self.state
    }

    /// Reconstructed 14-bit uniform sample.
    pub fn decode_14bit(&mut self, code: u8) -> i32 {
        step(&mut self.state, self.rate, i32::from(code)).0
    }

    /// 16-bit uniform output (`sr << 2`, saturated).
    pub fn decode_linear(&mut self, code: u8) -> i16 {
        (self.decode_14bit(code) << 2).clamp(-32768, 32767) as i16
    }

    /// Log-PCM output with synchronous coding adjustment.
    pub fn decode_log(&mut self, code: u8, law: LogLaw) -> u8 {
        let code = i32::from(code) & ((1 << self.rate.bits()) - 1);
        let (sr, se, y) = step(&mut self.state, self.rate, code);
        match law {
            LogLaw::ALaw => tandem_adjust_alaw(sr, se, y, code, self.rate),
            LogLaw::MuLaw => tandem_adjust_ulaw(sr, se, y, code, self.rate),
        }
    }

    pub fn decode_block(&mut self, codes: &[u8]) -> Vec<i16> {
        codes.iter().map(|&c| self.decode_linear(c)).collect()
    }
}

fn tandem_adjust_alaw(sr: i32, se: i32, y: i32, i: i32, rate: G726Rate) -> u8 {
    let sign = 1 << (rate.bits() - 1);
    let sr = if sr <= -32768 { -1 } else { sr };
    let sp = linear_to_alaw((sr >> 1) << 3);
    let dx = short((alaw_to_linear(sp) >> 2) - se);
    let id = quantize(dx, y, rate);
    if id == i {
        return sp;
    }
    let im = i ^ sign;
    let imx = id ^ sign;
    let sp = i32::from(sp);
    let sd = if imx > im {
        if sp & 0x80 != 0 {
            if sp == 0xD5 {
                0x55
            } else {
                ((sp ^ 0x55) - 1) ^ 0x55
            }
        } else if sp == 0x2A {
            0x2A
        } else {
            ((sp ^ 0x55) + 1) ^ 0x55
        }
    } else if sp & 0x80 != 0 {
        if sp == 0xAA {
            0xAA
        } else {
            ((sp ^ 0x55) + 1) ^ 0x55
        }
    } else if sp == 0x55 {
        0xD5
    } else {
        ((sp ^ 0x55) - 1) ^ 0x55
    };
    sd as u8
}

fn tandem_adjust_ulaw(sr: i32, se: i32, y: i32, i: i32, rate: G726Rate) -> u8 {
    let sign = 1 << (rate.bits() - 1);
    let sr = if sr <= -32768 { 0 } else { sr };
    let sp = linear_to_ulaw(sr << 2);
    let dx = short((ulaw_to_linear(sp) >> 2) - se);
    let id = quantize(dx, y, rate);
    if id == i {
        return sp;
    }
    let im = i ^ sign;
    let imx = id ^ sign;
    let sp = i32::from(sp);
    let sd = if imx > im {
        if sp & 0x80 != 0 {
            if sp == 0xFF {
                0x7E
            } else {
                sp + 1
            }
        } else if sp == 0 {
            0
        } else {
            sp - 1
        }
    } else if sp & 0x80 != 0 {
        if sp == 0x80 {
            0x80
        } else {
            sp - 1
        }
    } else if sp == 0x7F {
        0xFE
    } else {
        sp + 1
    };
    sd as u8
}

const SEG_END: [i32; 8] = [0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF, 0x1FFF, 0x3FFF, 0x7FFF];

fn segment(val: i32) -> usize {
    SEG_END.iter().position(|&e| val <= e).unwrap_or(8)
}

/// G.711 A-law compression of a 16-bit sample.
pub fn linear_to_alaw(pcm: i32) -> u8 {
    let (mask, val) = if pcm >= 0 { (0xD5, pcm) } else { (0x55, -pcm - 8) };
    let seg = segment(val);
    if seg >= 8 {
        return (0x7F ^ mask) as u8;
    }
    let mut aval = (seg as i32) << 4;
    aval |= if seg < 2 { (val >> 4) & 0xF } else { (val >> (seg + 3)) & 0xF };
    (aval ^ mask) as u8
}

pub fn alaw_to_linear(a: u8) -> i32 {
    let a = i32::from(a ^ 0x55);
    let mut t = (a & 0xF) << 4;
    let seg = (a & 0x70) >> 4;
    match seg {
        0 => t += 8,
        1 => t += 0x108,
        _ => {
            t += 0x108;
            t <<= seg - 1;
        }
    }
    if a & 0x80 != 0 {
        t
    } else {
        -t
    }
}

const ULAW_BIAS: i32 = 0x84;

/// G.711 mu-law compression of a 16-bit sample.
pub fn linear_to_ulaw(pcm: i32) -> u8 {
    let (mask, val) = if pcm < 0 {
        (0x7F, ULAW_BIAS - pcm)
    } else {
        (0xFF, pcm + ULAW_BIAS)
    };
    let seg = segment(val);
    if seg >= 8 {
        return (0x7F ^ mask) as u8;
    }
    let uval = ((seg as i32) << 4) | ((val >> (seg + 3)) & 0xF);
    (uval ^ mask) as u8
}

pub fn ulaw_to_linear(u: u8) -> i32 {
    let u = i32::from(!u);
    let mut t = ((u & 0xF) << 3) + ULAW_BIAS;
    t <<= (u & 0x70) >> 4;
    if u & 0x80 != 0 {
        ULAW_BIAS - t
    } else {
        t - ULAW_BIAS
    }
}

/// Bit order used when packing codes into bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Packing {
    /// First code in the least significant bits (RFC 3551 "G726-32").
    LsbFirst,
    /// First code in the most significant bits (ITU-T I.366.2 / AAL2).
    MsbFirst,
}

pub fn pack_codes(codes: &[u8], bits: u32, packing: Packing) -> Vec<u8> {
    let mut out = Vec::with_capacity((codes.len() * bits as usize).div_ceil(8));
    let mut acc: u32 = 0;
    let mut n = 0u32;
    for &c in codes {
        let c = u32::from(c) & ((1 << bits) - 1);
        match packing {
            Packing::LsbFirst => acc |= c << n,
            Packing::MsbFirst => acc = (acc << bits) | c,
        }
        n += bits;
        while n >= 8 {
            match packing {
                Packing::LsbFirst => {
                    out.push(acc as u8);
                    acc >>= 8;
                }
                Packing::MsbFirst => {
                    out.push((acc >> (n - 8)) as u8);
                    acc &= (1 << (n - 8)) - 1;
                }
            }
            n -= 8;
        }
    }
    if n > 0 {
        out.push(match packing {
            Packing::LsbFirst => acc as u8,
            Packing::MsbFirst => (acc << (8 - n)) as u8,
        });
    }
    out
}

pub fn unpack_codes(bytes: &[u8], bits: u32, count: usize, packing: Packing) -> Vec<u8> {
    let mut out = Vec::with_capacity(count);
    let mut acc: u32 = 0;
    let mut n = 0u32;
    let mask = (1u32 << bits) - 1;
    for &b in bytes {
        match packing {
            Packing::LsbFirst => acc |= u32::from(b) << n,
            Packing::MsbFirst => acc = (acc << 8) | u32::from(b),
        }
        n += 8;
        while n >= bits && out.len() < count {
            match packing {
                Packing::LsbFirst => {
                    out.push((acc & mask) as u8);
                    acc >>= bits;
                }
                Packing::MsbFirst => {
                    out.push(((acc >> (n - bits)) & mask) as u8);
                    acc &= (1 << (n - bits)) - 1;
                }
            }
            n -= bits;
        }
    }
    out
}

/// Encodes then decodes 8 kHz 16-bit samples.
pub fn roundtrip_8k(samples: &[i16], rate: G726Rate) -> Vec<i16> {
    let mut enc = G726Encoder::new(rate);
    let mut dec = G726Decoder::new(rate);
    samples
        .iter()
        .map(|&s| dec.decode_linear(enc.encode_linear(s)))
        .collect()
}

/// Outcome of one conformance sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorResult {
    pub name: String,
    pub compared: usize,
    pub mismatches: usize,
}

impl VectorResult {
    pub fn passed(&self) -> bool {
        self.compared > 0 && self.mismatches == 0
    }
}

/// Runs conformance sequences listed in `dir/vectors.txt`.
///
/// Each non-comment line reads `<rate> <alaw|ulaw> <encode|decode> <input>
/// <expected>`, with files holding one log-PCM sample or one ADPCM code per
/// byte. Every sequence starts from the reset state.
pub fn run_vector_list(dir: &std::path::Path) -> Result<Vec<VectorResult>> {
    let list_path = dir.join("vectors.txt");
    let list = std::fs::read_to_string(&list_path).map_err(|e| Error::io(&list_path, e))?;
    let read = |name: &str| {
        let path = dir.join(name);
        std::fs::read(&path).map_err(|e| Error::io(&path, e))
    };
    let mut results = Vec::new();
    for line in list.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [rate, law, direction, input, expected] = fields[..] else {
            return Err(config_err!("malformed vector line {line:?}"));
        };
        let rate: G726Rate = rate.parse()?;
        let law = match law {
            "alaw" | "a" => LogLaw::ALaw,
            "ulaw" | "mulaw" | "u" => LogLaw::MuLaw,
            other => return Err(config_err!("unknown law {other:?}")),
        };
        let input = read(input)?;
        let expected = read(expected)?;
        let produced: Vec<u8> = match direction {
            "encode" => {
                let mut enc = G726Encoder::new(rate);
                input.iter().map(|&x| enc.encode_log(x, law)).collect()
            }
            "decode" => {
                let mut dec = G726Decoder::new(rate);
                input.iter().map(|&c| dec.decode_log(c, law)).collect()
            }
            other => return Err(config_err!("unknown direction {other:?}")),
        };
        let compared = produced.len().min(expected.len());
        let mismatches = produced
            .iter()
            .zip(&expected)
            .filter(|(a, b)| a != b)
            .count()
            + produced.len().abs_diff(expected.len());
        results.push(VectorResult {
            name: line.to_string(),
            compared,
            mismatches,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g711_round_trips_every_code() {
        for code in 0..=255u8 {
            assert_eq!(linear_to_alaw(alaw_to_linear(code)), code, "alaw {code:#x}");
            let lin = ulaw_to_linear(code);
            let back = linear_to_ulaw(lin);
            // 0x7F and 0xFF both decode to zero
            assert_eq!(ulaw_to_linear(back), lin, "ulaw {code:#x}");
        }
    }

    #[test]
    fn g711_known_values() {
        assert_eq!(linear_to_ulaw(0), 0xFF);
        assert_eq!(linear_to_alaw(0), 0xD5);
        assert_eq!(ulaw_to_linear(0x00), -32124);
        assert_eq!(ulaw_to_linear(0x80), 32124);
        assert_eq!(alaw_to_linear(0xD5), 8);
        assert_eq!(alaw_to_linear(0x2A), -32256);
    }

    #[test]
    fn silence_stays_silent_at_every_rate() {
        for rate in [G726Rate::Kbps16, G726Rate::Kbps24, G726Rate::Kbps32, G726Rate::Kbps40] {
            let out = roundtrip_8k(&[0; 4000], rate);
            assert!(out.iter().all(|&s| s.abs() <= 32), "{rate:?}");
        }
    }

    #[test]
    fn tone_survives_the_codec() {
        let x: Vec<i16> = (0..8000)
            .map(|n| (8000.0 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 8000.0).sin()) as i16)
            .collect();
        for (rate, min_snr) in [
            (G726Rate::Kbps16, 5.0),
            (G726Rate::Kbps24, 12.0),
            (G726Rate::Kbps32, 18.0),
            (G726Rate::Kbps40, 24.0),
        ] {
            let y = roundtrip_8k(&x, rate);
            let sig: f64 = x[800..].iter().map(|&v| (v as f64).powi(2)).sum();
            let err: f64 = x[800..].iter().zip(&y[800..]).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
            let snr = 10.0 * (sig / err).log10();
            assert!(snr > min_snr, "{rate:?}: {snr} dB");
        }
    }

    #[test]
    fn encoder_and_decoder_states_track() {
        let mut enc = G726Encoder::new(G726Rate::Kbps32);
        let mut dec = G726Decoder::new(G726Rate::Kbps32);
        for n in 0..2000 {
            let s = ((n * 7919) % 20000 - 10000) as i16;
            dec.decode_linear(enc.encode_linear(s));
            assert_eq!(enc.state(), dec.state());
        }
    }

    #[test]
    fn rate_parsing() {
        assert_eq!("32k".parse::<G726Rate>().unwrap(), G726Rate::Kbps32);
        assert_eq!("40000".parse::<G726Rate>().unwrap(), G726Rate::Kbps40);
        assert!("64k".parse::<G726Rate>().is_err());
        assert!(G726Rate::from_bits(6).is_err());
    }

    #[test]
    fn log_pcm_paths_are_close_to_input() {
        let x: Vec<i32> = (0..4000)
            .map(|n| (6000.0 * (2.0 * std::f64::consts::PI * 300.0 * n as f64 / 8000.0).sin()) as i32)
            .collect();
        for law in [LogLaw::ALaw, LogLaw::MuLaw] {
            let mut enc = G726Encoder::new(G726Rate::Kbps32);
            let mut dec = G726Decoder::new(G726Rate::Kbps32);
            let (compress, expand): (fn(i32) -> u8, fn(u8) -> i32) = match law {
                LogLaw::ALaw => (linear_to_alaw, alaw_to_linear),
                _ => (linear_to_ulaw, ulaw_to_linear),
            };
            let mut err = 0.0;
            let mut sig = 0.0;
            for &s in &x[400..] {
                let out = expand(dec.decode_log(enc.encode_log(compress(s), law), law));
                err += ((out - s) as f64).powi(2);
                sig += (s as f64).powi(2);
            }
            assert!(10.0 * (sig / err).log10() > 15.0, "{law:?}");
        }
    }

    proptest! {
        #[test]
        fn packing_round_trips(codes in proptest::collection::vec(0u8..32, 0..200), bits in 2u32..=5) {
            let codes: Vec<u8> = codes.iter().map(|c| c & ((1 << bits) - 1)).collect();
            for packing in [Packing::LsbFirst, Packing::MsbFirst] {
                let packed = pack_codes(&codes, bits, packing);
                prop_assert_eq!(unpack_codes(&packed, bits, codes.len(), packing), codes.clone());
            }
        }
    }
}
