#include "afnet/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace afnet;
using testutil::grad_check;
using testutil::rand_tensor;

TEST_CASE("gather and scatter are inverse on the selected rows") {
    RngState rng{51, 0};
    auto x = rand_tensor({6, 2, 2, 2}, rng);
    std::vector<int> idx{1, 3, 4};
    auto g = gather_frames(x, idx);
    REQUIRE(g.dim(0) == 3);
    for (size_t i = 0; i < idx.size(); ++i)
        for (int p = 0; p < 8; ++p)
            CHECK(g.data()[i * 8 + p] == x.data()[static_cast<size_t>(idx[i]) * 8 + p]);
    auto s = scatter_frames(g, idx, 6);
    REQUIRE(s.dim(0) == 6);
    for (int f = 0; f < 6; ++f) {
        const bool kept = std::find(idx.begin(), idx.end(), f) != idx.end();
        for (int p = 0; p < 8; ++p)
            CHECK(s.data()[f * 8 + p] == (kept ? x.data()[f * 8 + p] : 0.0));
    }
    CHECK(grad_check([&] { return sum(gather_frames(x, idx) * gather_frames(x, idx)); }, {x}) <
          1e-4);
}

TEST_CASE("temporal shift moves the first fold forward and the second backward") {
    // T=4, one video, 4 channels, fraction 0.25 -> fold = 1 channel each way
    const int t = 4, c = 4, plane = 1;
    std::vector<double> v(static_cast<size_t>(t) * c * plane);
    for (int f = 0; f < t; ++f)
        for (int ch = 0; ch < c; ++ch) v[f * c + ch] = 10.0 * f + ch;
    auto x = Tensor<double>::from(v, {t, c, 1, 1});
    auto y = temporal_shift(x, t, 0.25);
    for (int f = 0; f < t; ++f) {
        // channel 0 reads frame f-1 (zero at the left edge)
        const double want0 = f - 1 >= 0 ? 10.0 * (f - 1) + 0 : 0.0;
        CHECK(y.data()[f * c + 0] == want0);
        // channel 1 reads frame f+1 (zero at the right edge)
        const double want1 = f + 1 < t ? 10.0 * (f + 1) + 1 : 0.0;
        CHECK(y.data()[f * c + 1] == want1);
        // remaining channels untouched
        CHECK(y.data()[f * c + 2] == 10.0 * f + 2);
        CHECK(y.data()[f * c + 3] == 10.0 * f + 3);
    }
}

TEST_CASE("temporal shift never crosses video boundaries") {
    const int t = 2, c = 2;
    // two videos of 2 frames, 2 channels, fraction 0.5 -> fold=1
    auto x = Tensor<double>::from({1, 2, 3, 4, 5, 6, 7, 8}, {4, c, 1, 1});
    auto y = temporal_shift(x, t, 0.5);
    // video 0: frame0 ch0 reads frame -1 -> 0; frame1 ch0 reads frame0 -> 1
    CHECK(y.data()[0 * c + 0] == 0.0);
    CHECK(y.data()[1 * c + 0] == 1.0);
    // video 1 starts fresh: frame2 ch0 reads "frame1 of video 1" -> 0 pad
    CHECK(y.data()[2 * c + 0] == 0.0);
    CHECK(y.data()[3 * c + 0] == 5.0);
}

TEST_CASE("finite differences confirm temporal shift gradients") {
    RngState rng{52, 0};
    auto x = rand_tensor({8, 4, 2, 2}, rng);
    CHECK(grad_check([&] { return sum(temporal_shift(x, 4, 0.25) * temporal_shift(x, 4, 0.25)); },
                     {x}) < 1e-4);
}

TEST_CASE("frame mean averages each video's frames") {
    auto x = Tensor<double>::from({1, 2, 3, 4, 5, 6, 7, 8}, {4, 2});  // 2 videos, T=2, K=2
    auto m = frame_mean(x, 2);
    REQUIRE(m.dim(0) == 2);
    CHECK(m.data() == std::vector<double>{2, 3, 6, 7});
    RngState rng{53, 0};
    auto xr = rand_tensor({6, 3}, rng);
    CHECK(grad_check([&] { return sum(frame_mean(xr, 3) * frame_mean(xr, 3)); }, {xr}) < 1e-4);
}

TEST_CASE("mul_frames scales whole frames by their mask entry") {
    RngState rng{54, 0};
    auto x = rand_tensor({4, 2, 2, 2}, rng);
    auto m = Tensor<double>::from({0.0, 1.0, 0.5, 2.0}, {4});
    auto y = mul_frames(x, m);
    for (int f = 0; f < 4; ++f)
        for (int p = 0; p < 8; ++p)
            CHECK(y.data()[f * 8 + p] == doctest::Approx(x.data()[f * 8 + p] * m.data()[f]));
    CHECK(grad_check([&] { return sum(mul_frames(x, m) * mul_frames(x, m)); }, {x, m}) < 1e-4);
}

TEST_CASE("mul_video_channels broadcasts one weight per (video, channel)") {
    RngState rng{55, 0};
    const int t = 2, c = 3;
    auto x = rand_tensor({2 * t, c, 2, 2}, rng);
    auto th = Tensor<double>::from({0.1, 0.5, 0.9, 0.2, 0.4, 0.8}, {2 * c});
    auto y = mul_video_channels(x, th, t);
    for (int f = 0; f < 2 * t; ++f)
        for (int ch = 0; ch < c; ++ch)
            for (int p = 0; p < 4; ++p)
                CHECK(y.data()[(f * c + ch) * 4 + p] ==
                      doctest::Approx(x.data()[(f * c + ch) * 4 + p] *
                                      th.data()[(f / t) * c + ch]));
    CHECK(grad_check(
              [&] { return sum(mul_video_channels(x, th, t) * mul_video_channels(x, th, t)); },
              {x, th}) < 1e-4);
}

TEST_CASE("mul_spatial applies a per-frame plane mask across channels") {
    RngState rng{56, 0};
    auto x = rand_tensor({2, 3, 2, 2}, rng);
    auto m = Tensor<double>::from({1, 0, 0.5, 1, 0, 1, 1, 0.25}, {2, 2, 2});
    auto y = mul_spatial(x, m);
    for (int f = 0; f < 2; ++f)
        for (int ch = 0; ch < 3; ++ch)
            for (int p = 0; p < 4; ++p)
                CHECK(y.data()[(f * 3 + ch) * 4 + p] ==
                      doctest::Approx(x.data()[(f * 3 + ch) * 4 + p] * m.data()[f * 4 + p]));
    CHECK(grad_check([&] { return sum(mul_spatial(x, m) * mul_spatial(x, m)); }, {x, m}) < 1e-4);
}
