#pragma once

#include <memory>
#include <span>
#include <string>

namespace nlsc {

// Scalar field on R^n written in a small arithmetic language:
//   numbers, x1..xn (or x_1..x_n), r or |x| for the Euclidean norm,
//   + - * / ^, parentheses, and the functions exp, log, sqrt, sin, cos, abs.
// Parsing builds a tree; nothing is executed beyond these primitives.
class Expression {
public:
    struct Node;

    static Expression parse(const std::string& text, int dim);

    double operator()(std::span<const double> x) const;
    const std::string& text() const { return text_; }
    int dim() const { return dim_; }

private:
    std::shared_ptr<const Node> root_;
    std::string text_;
    int dim_ = 0;
};

}  // namespace nlsc
