use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Aabb, LatticeSpec, ModelDescriptor, NuclearConfiguration};
use crate::error::{Error, Result};

pub const NUCLEI_CSV_HEADER: [&str; 7] = ["x", "y", "z", "charge", "site_i", "site_j", "site_k"];

/// Everything needed to regenerate a configuration, without the nuclei.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigurationDescriptor {
    #[serde(with = "crate::rng::hex_seed")]
    pub seed: u64,
    pub window: Aabb,
    pub margin: f64,
    pub lattice: LatticeSpec,
    pub model: ModelDescriptor,
    pub nuclei: usize,
}

impl ConfigurationDescriptor {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("descriptor serialization: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Schema(vec![e.to_string()]))
    }
}

impl NuclearConfiguration {
    pub fn descriptor(&self) -> ConfigurationDescriptor {
        ConfigurationDescriptor {
            seed: self.seed,
            window: self.window,
            margin: self.margin,
            lattice: self.lattice.clone(),
            model: self.model.clone(),
            nuclei: self.nuclei.len(),
        }
    }

    /// Writes one row per nucleus: `x,y,z,charge,site_i,site_j,site_k`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(NUCLEI_CSV_HEADER)?;
        for n in &self.nuclei {
            w.write_record([
                n.position[0].to_string(),
                n.position[1].to_string(),
                n.position[2].to_string(),
                n.charge.to_string(),
                n.site[0].to_string(),
                n.site[1].to_string(),
                n.site[2].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{sample_configuration, ChargeLaw, DisplacementLaw};

    #[test]
    fn descriptor_roundtrip() {
        let c = sample_configuration(
            &LatticeSpec::cubic(),
            &DisplacementLaw::gaussian(0.25),
            &ChargeLaw::UniformInterval { min: 1.0, max: 2.0 },
            Aabb::cube(0.0, 2.0),
            2.0,
            17,
        )
        .unwrap();
        let text = c.descriptor().to_toml().unwrap();
        let back = ConfigurationDescriptor::from_toml(&text).unwrap();
        assert_eq!(back, c.descriptor());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let c = sample_configuration(
            &LatticeSpec::cubic(),
            &DisplacementLaw::PointMass,
            &ChargeLaw::Constant { z: 1.0 },
            Aabb::cube(0.0, 2.0),
            0.0,
            1,
        )
        .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,y,z,charge,site_i,site_j,site_k"));
        assert_eq!(lines.count(), 8);
    }
}
