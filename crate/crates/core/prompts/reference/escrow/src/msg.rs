use cosmwasm_schema::cw_serde;

#[cw_serde]
pub struct InstantiateMsg {
    pub arbiter: String,
}

#[cw_serde]
pub enum ExecuteMsg {
    Deposit { beneficiary: String },
    Release { id: u64 },
}
