#ifndef PLATEFSI_FEM_QUADRATURE_HPP
#define PLATEFSI_FEM_QUADRATURE_HPP

#include <array>
#include <cstddef>

namespace platefsi::fem {

/// Gauss-Legendre rules mapped to the unit interval [0,1].
template <std::size_t N>
struct Gauss1d;

template <>
struct Gauss1d<1> {
    static constexpr std::array<double, 1> points{0.5};
    static constexpr std::array<double, 1> weights{1.0};
};

template <>
struct Gauss1d<2> {
    // +- 1/sqrt(3) on [-1,1]
    static constexpr double a = 0.28867513459481288225457439025098;
    static constexpr std::array<double, 2> points{0.5 - a, 0.5 + a};
    static constexpr std::array<double, 2> weights{0.5, 0.5};
};

template <>
struct Gauss1d<3> {
    static constexpr double b = 0.38729833462074168851792653997824; // sqrt(3/5)/2
    static constexpr std::array<double, 3> points{0.5 - b, 0.5, 0.5 + b};
    static constexpr std::array<double, 3> weights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
};

template <>
struct Gauss1d<4> {
    static constexpr double c1 = 0.43056815579702628760942871113875; // sqrt((3+2sqrt(6/5))/7)/2
    static constexpr double c2 = 0.16999052179242812646665552791767; // sqrt((3-2sqrt(6/5))/7)/2
    static constexpr double w1 = 0.17392742256872692868653197461100; // (18-sqrt(30))/72
    static constexpr double w2 = 0.32607257743127307131346802538900; // (18+sqrt(30))/72
    static constexpr std::array<double, 4> points{0.5 - c1, 0.5 - c2, 0.5 + c2, 0.5 + c1};
    static constexpr std::array<double, 4> weights{w1, w2, w2, w1};
};

} // namespace platefsi::fem

#endif
