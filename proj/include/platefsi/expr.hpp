#ifndef PLATEFSI_EXPR_HPP
#define PLATEFSI_EXPR_HPP

#include <json.hpp>

#include <memory>
#include <string>
#include <vector>

namespace platefsi {

/// Small arithmetic expression over the variables t, x, z with the usual
/// operators, parentheses and elementary functions. Used for forcing terms in
/// config files.
class Expression {
public:
    Expression(); // constant zero

    static Expression parse(const std::string& text);
    static Expression constant(double value);
    /// Piecewise-linear table over the x variable, constant in t and z.
    static Expression tabulated(std::vector<double> xs, std::vector<double> values);
    /// Number, expression string, or {"x": [...], "values": [...]} table.
    static Expression from_spec(const nlohmann::json& spec);

    double eval(double t, double x, double z = 0.0) const;
    bool is_constant_zero() const;
    /// Original text (or the formatted constant); round-trips through parse.
    const std::string& source() const { return source_; }
    /// Config echo: a string for parsed expressions, an object for tables.
    nlohmann::json spec_json() const;

    struct Node;

private:
    std::shared_ptr<const Node> root_;
    std::string source_;
};

} // namespace platefsi

#endif
