#pragma once

#include <stdexcept>
#include <string>

namespace thr {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// hierarchy
struct EmptyAggregate : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };

// arma
struct NonStationaryModel : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };
struct InsufficientHistory : Error { using Error::Error; };
struct OptimizerFailure : Error { using Error::Error; };
struct AllFitsFailed : Error { using Error::Error; };
struct DegenerateSeries : Error { using Error::Error; };
struct InvalidPacf : Error { using Error::Error; };

// aggtheory
struct NonStationary : Error { using Error::Error; };
struct NoInvertibleRoot : Error { using Error::Error; };
struct UnsupportedModel : Error { using Error::Error; };

// reconcile
struct SingularCovariance : Error { using Error::Error; };
struct DegenerateVariance : Error { using Error::Error; };
struct InsufficientResiduals : Error { using Error::Error; };

// evaluate
struct ZeroBaseError : Error { using Error::Error; };

// io / config
struct ConfigError : Error { using Error::Error; };
struct FrequencyMismatch : Error { using Error::Error; };

/// CSV parse failure carrying the 1-based position of the offending cell.
struct ParseError : Error {
    int line = 0;
    int column = 0;
    ParseError(const std::string& msg, int line_, int column_)
        : Error(msg + " (line " + std::to_string(line_) + ", column " +
                std::to_string(column_) + ")"),
          line(line_), column(column_) {}
};

} // namespace thr
