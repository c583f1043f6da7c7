//! Conversions applied at the file boundary. Everything inside the crate is SI.

/// Millimeters to meters.
pub fn mm_to_m(mm: f64) -> f64 {
    mm / 1000.0
}

pub fn m_to_mm(m: f64) -> f64 {
    m * 1000.0
}

/// N·mm/rad to N·m/rad. Also N·mm to N·m.
pub fn nmm_to_nm(nmm: f64) -> f64 {
    nmm / 1000.0
}

pub fn nm_to_nmm(nm: f64) -> f64 {
    nm * 1000.0
}
