#pragma once

#include <string>
#include <vector>

namespace gazeformer {

struct Fixation {
    double x = 0.0;  // pixels
    double y = 0.0;  // pixels
    double t = 0.0;  // milliseconds
};

struct Scanpath {
    std::vector<Fixation> fixations;
    std::string image_id;
    std::string target_name;
    std::string subject = "model";
    // Set when the model declared the very first step invalid and the
    // initial fixation was emitted instead.
    bool empty_prediction = false;

    size_t length() const { return fixations.size(); }
};

}  // namespace gazeformer
