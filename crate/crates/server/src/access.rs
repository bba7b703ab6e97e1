//! Which roles may call which routes.
//!
//! This is the coarse gate applied before a request reaches a service.
//! Ownership (a policyholder's own uid, a hospital's own claims) is checked
//! again by the services and by the claim read routes.

use std::fmt;

use medclaim_core::domain::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Route {
    SubmitPreAuth,
    ListClaims,
    GetClaim,
    Scrutinize,
    Authorize,
    ReportPayment,
    Settle,
    Hospitals,
    ListServices,
    SetServiceState,
    Metrics,
    SeedFixtures,
    ServiceEnvelope,
}

impl Route {
    pub const ALL: &'static [Route] = &[
        Route::SubmitPreAuth,
        Route::ListClaims,
        Route::GetClaim,
        Route::Scrutinize,
        Route::Authorize,
        Route::ReportPayment,
        Route::Settle,
        Route::Hospitals,
        Route::ListServices,
        Route::SetServiceState,
        Route::Metrics,
        Route::SeedFixtures,
        Route::ServiceEnvelope,
    ];

    /// Method and path template.
    pub fn path(self) -> &'static str {
        match self {
            Route::SubmitPreAuth => "POST /preauth",
            Route::ListClaims => "GET /claims",
            Route::GetClaim => "GET /claims/{id}",
            Route::Scrutinize => "POST /claims/{id}/scrutiny",
            Route::Authorize => "POST /claims/{id}/authorize",
            Route::ReportPayment => "POST /claims/{id}/payment",
            Route::Settle => "POST /claims/{id}/settle",
            Route::Hospitals => "GET /hospitals",
            Route::ListServices => "GET /registry/services",
            Route::SetServiceState => "POST /registry/services/{id}/state",
            Route::Metrics => "GET /monitor/metrics",
            Route::SeedFixtures => "POST /admin/fixtures",
            Route::ServiceEnvelope => "POST /services/{name}",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.path())
    }
}

pub fn allows(role: Role, route: Route) -> bool {
    use Role::*;
    use Route::*;
    match route {
        SubmitPreAuth => matches!(role, Policyholder | Hospital),
        ListClaims | GetClaim | Hospitals => matches!(role, Policyholder | Hospital | Tpa),
        Scrutinize | Authorize | Settle => role == Tpa,
        ReportPayment => matches!(role, Hospital | Tpa),
        ListServices | SetServiceState | Metrics | SeedFixtures | ServiceEnvelope => role == Admin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix() {
        // Columns: policyholder, hospital, tpa, admin.
        let table: [(Route, [bool; 4]); 13] = [
            (Route::SubmitPreAuth, [true, true, false, false]),
            (Route::ListClaims, [true, true, true, false]),
            (Route::GetClaim, [true, true, true, false]),
            (Route::Scrutinize, [false, false, true, false]),
            (Route::Authorize, [false, false, true, false]),
            (Route::ReportPayment, [false, true, true, false]),
            (Route::Settle, [false, false, true, false]),
            (Route::Hospitals, [true, true, true, false]),
            (Route::ListServices, [false, false, false, true]),
            (Route::SetServiceState, [false, false, false, true]),
            (Route::Metrics, [false, false, false, true]),
            (Route::SeedFixtures, [false, false, false, true]),
            (Route::ServiceEnvelope, [false, false, false, true]),
        ];
        let roles = [Role::Policyholder, Role::Hospital, Role::Tpa, Role::Admin];
        assert_eq!(table.len(), Route::ALL.len());
        for (route, row) in table {
            for (role, want) in roles.iter().zip(row) {
                assert_eq!(allows(*role, route), want, "{role} {route}");
            }
        }
    }
}
