//! Fixed factor and sector catalog shared by every matrix index in the crate.

/// Number of style factors.
pub const N_FACTORS: usize = 10;
/// Number of industry sectors.
pub const N_SECTORS: usize = 28;
/// Dimension of one daily portfolio record: exposures, sector weights, cash.
pub const RECORD_DIM: usize = N_FACTORS + N_SECTORS + 1;

/// Column names of the style factors, in index order.
pub const STYLE_FACTORS: [&str; N_FACTORS] = [
    "beta",
    "momentum",
    "size",
    "earnings_yield",
    "residual_volatility",
    "growth",
    "book_to_price",
    "leverage",
    "liquidity",
    "non_linear_size",
];

/// Industry sector names, in index order.
pub const SECTOR_NAMES: [&str; N_SECTORS] = [
    "agriculture",
    "mining",
    "chemicals",
    "steel",
    "nonferrous_metals",
    "electronics",
    "household_appliances",
    "food_beverage",
    "textiles_apparel",
    "light_manufacturing",
    "pharma_biotech",
    "utilities",
    "transportation",
    "real_estate",
    "commerce_trade",
    "leisure_services",
    "conglomerates",
    "building_materials",
    "building_decoration",
    "electrical_equipment",
    "defense",
    "computers",
    "media",
    "telecom",
    "banks",
    "nonbank_financials",
    "automobiles",
    "machinery",
];

/// Ordered factor and sector names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorCatalog {
    pub style_factors: &'static [&'static str; N_FACTORS],
    pub sector_names: &'static [&'static str; N_SECTORS],
}

impl FactorCatalog {
    pub const fn standard() -> Self {
        Self { style_factors: &STYLE_FACTORS, sector_names: &SECTOR_NAMES }
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.style_factors.iter().position(|f| *f == name)
    }

    pub fn factor_name(&self, index: usize) -> &'static str {
        self.style_factors[index]
    }

    pub fn sector_name(&self, index: usize) -> &'static str {
        self.sector_names[index]
    }
}

impl Default for FactorCatalog {
    fn default() -> Self {
        Self::standard()
    }
}
