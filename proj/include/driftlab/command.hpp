#pragma once

namespace driftlab {

/// Actuator command: front wheel steering angle (rad) and wheel rotational
/// speed (rad/s).
struct ControlCommand {
    double delta = 0.0;
    double omega = 0.0;
};

} // namespace driftlab
