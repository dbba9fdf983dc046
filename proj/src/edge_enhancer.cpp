#include "focus/edge_enhancer.hpp"

#include <cmath>
#include <stdexcept>

namespace focus {

Tensor Pyramid::level(long i) const {
    return slice(tokens, 0, offsets[i], levels[i].count());
}

Tensor Pyramid::level_plane(long i) const {
    long d = tokens.dim(1);
    return reshape(transpose(level(i)), {d, levels[i].h, levels[i].w});
}

Pyramid make_pyramid(const std::vector<Tensor>& level_tokens,
                     const std::vector<LevelSpec>& specs) {
    if (level_tokens.empty() || level_tokens.size() != specs.size())
        throw std::invalid_argument("make_pyramid: level/spec count mismatch");
    Pyramid p;
    p.levels = specs;
    p.offsets.push_back(0);
    for (size_t i = 0; i < specs.size(); ++i) {
        if (level_tokens[i].dim(0) != specs[i].count())
            throw std::invalid_argument("make_pyramid: level " + std::to_string(i) + " has " +
                                        std::to_string(level_tokens[i].dim(0)) + " tokens, spec " +
                                        std::to_string(specs[i].count()));
        p.offsets.push_back(p.offsets.back() + specs[i].count());
    }
    p.tokens = level_tokens.size() == 1 ? level_tokens[0] : concat(level_tokens, 0);
    return p;
}

Tensor grid_reference_points(const std::vector<LevelSpec>& specs) {
    long n = 0;
    for (const auto& s : specs) n += s.count();
    Tensor refs = make_tensor({n, 2}, DType::F64);
    long row = 0;
    for (const auto& s : specs)
        for (long y = 0; y < s.h; ++y)
            for (long x = 0; x < s.w; ++x, ++row) {
                refs.raw()[row * 2] = (x + 0.5) / s.w;
                refs.raw()[row * 2 + 1] = (y + 0.5) / s.h;
            }
    return refs;
}

DeformAttn make_deform_attn(ParamStore& ps, const std::string& name, long dq, long dv, long heads,
                            long points, long levels) {
    if (dq % heads != 0)
        throw std::invalid_argument("make_deform_attn: heads must divide query width");
    DeformAttn a;
    a.dq = dq;
    a.heads = heads;
    a.points = points;
    a.levels = levels;
    a.offset_fc = make_linear(ps, name + ".offset", dq, heads * levels * points * 2, true,
                              Init::Zeros);
    a.weight_fc = make_linear(ps, name + ".weight", dq, heads * levels * points, true,
                              Init::Zeros);
    a.value_fc = make_linear(ps, name + ".value", dv, dq);
    a.out_fc = make_linear(ps, name + ".out", dq, dq);
    return a;
}

Tensor DeformAttn::apply(const Tensor& q, const Tensor& refs, const Pyramid& vals) const {
    if (vals.count() != levels)
        throw std::invalid_argument("DeformAttn: expected " + std::to_string(levels) +
                                    " value levels, got " + std::to_string(vals.count()));
    long nq = q.dim(0);
    long dh = dq / heads;

    Tensor off = reshape(offset_fc.apply(q), {nq, heads, levels, points, 2});
    Tensor wts = softmax(reshape(weight_fc.apply(q), {nq, heads, levels * points}));
    wts = reshape(wts, {nq, heads, levels, points});

    Tensor v = value_fc.apply(vals.tokens);  // [Nv, dq]
    std::vector<Tensor> planes;
    for (long l = 0; l < levels; ++l) {
        Tensor lt = slice(v, 0, vals.offsets[l], vals.levels[l].count());
        planes.push_back(reshape(transpose(lt), {dq, vals.levels[l].h, vals.levels[l].w}));
    }

    Tensor ref3 = reshape(refs, {nq, 1, 2});
    std::vector<Tensor> head_out;
    for (long h = 0; h < heads; ++h) {
        Tensor acc;
        Tensor off_h = slice(off, 1, h, 1);  // [nq,1,levels,points,2]
        Tensor wts_h = slice(wts, 1, h, 1);  // [nq,1,levels,points]
        for (long l = 0; l < levels; ++l) {
            Tensor o = reshape(slice(off_h, 2, l, 1), {nq, points, 2});
            Tensor scale = make_tensor({2}, DType::F64);
            scale.raw()[0] = 1.0 / vals.levels[l].w;
            scale.raw()[1] = 1.0 / vals.levels[l].h;
            Tensor coords = reshape(add(ref3, mul(o, scale)), {nq * points, 2});
            Tensor plane_h = slice(planes[l], 0, h * dh, dh);      // [dh,lh,lw]
            Tensor s = reshape(grid_sample(plane_h, coords), {nq, points, dh});
            Tensor w = reshape(slice(wts_h, 2, l, 1), {nq, points, 1});
            Tensor contrib = sum_axis(mul(s, w), 1);               // [nq, dh]
            acc = acc.defined() ? add(acc, contrib) : contrib;
        }
        head_out.push_back(acc);
    }
    Tensor cat = head_out.size() == 1 ? head_out[0] : concat(head_out, 1);
    return out_fc.apply(cat);
}

// ---- edge path ----

namespace {

Tensor plane_to_tokens(const Tensor& plane) {  // [D,h,w] -> [h*w, D]
    return transpose(reshape(plane, {plane.dim(0), plane.dim(1) * plane.dim(2)}));
}

}  // namespace

Tensor EdgeNet::ResBlock::apply(const Tensor& x) const {
    Tensor y = relu(g1.apply(c1.apply(x)));
    Tensor z = g2.apply(c2.apply(y));
    Tensor s = projected ? gs.apply(sk.apply(x)) : x;
    return relu(add(z, s));
}

EdgeNet::EdgeNet(ParamStore& ps, long d) : d_(d) {
    const long stem_ch = 32;
    stem_conv_ = make_conv2d(ps, "edge_net.stem.conv", 3, stem_ch, 7, 2, 3);
    stem_gn_ = make_group_norm(ps, "edge_net.stem.gn", stem_ch, 8);
    stem_proj_ = make_conv2d(ps, "edge_net.stem.proj", stem_ch, d, 1, 1, 0);

    const long chans[4] = {stem_ch, 32, 64, 128};
    for (int s = 0; s < 3; ++s) {
        long ci = chans[s], co = chans[s + 1];
        for (int b = 0; b < 2; ++b) {
            std::string p = "edge_net.s" + std::to_string(s) + ".b" + std::to_string(b);
            ResBlock rb;
            long in = b == 0 ? ci : co;
            long stride = b == 0 ? 2 : 1;
            rb.c1 = make_conv2d(ps, p + ".c1", in, co, 3, stride, 1);
            rb.g1 = make_group_norm(ps, p + ".g1", co, 8);
            rb.c2 = make_conv2d(ps, p + ".c2", co, co, 3, 1, 1);
            rb.g2 = make_group_norm(ps, p + ".g2", co, 8);
            rb.projected = b == 0;
            if (rb.projected) {
                rb.sk = make_conv2d(ps, p + ".sk", in, co, 1, stride, 0);
                rb.gs = make_group_norm(ps, p + ".gsk", co, 8);
            }
            blocks_.push_back(std::move(rb));
        }
        proj_.push_back(make_conv2d(ps, "edge_net.proj" + std::to_string(s), co, d, 1, 1, 0));
    }
}

EdgeFeatures EdgeNet::forward(const Tensor& img) const {
    if (!img.defined() || img.rank() != 3 || img.dim(0) != 3 || img.dim(1) % 32 != 0 ||
        img.dim(2) % 32 != 0)
        throw std::invalid_argument("EdgeNet::forward: expected [3,H,W] with 32 | H,W, got " +
                                    shape_str(img.shape()));
    Tensor x = relu(stem_gn_.apply(stem_conv_.apply(img)));  // [32, H/2, W/2]
    x = max_pool2d(x, 2, 2);                                 // [32, H/4, W/4]

    EdgeFeatures ef;
    ef.stem = stem_proj_.apply(x);

    std::vector<Tensor> toks;
    std::vector<LevelSpec> specs;
    for (int s = 0; s < 3; ++s) {
        x = blocks_[2 * s + 1].apply(blocks_[2 * s].apply(x));
        Tensor lv = proj_[s].apply(x);  // [d, h, w]
        specs.push_back({lv.dim(1), lv.dim(2)});
        toks.push_back(plane_to_tokens(lv));
    }
    ef.pyramid = make_pyramid(toks, specs);
    return ef;
}

// ---- fusion ----

Tensor Injector::apply(const Tensor& tap, const Tensor& refs, const Pyramid& edge) const {
    Pyramid v = edge;
    v.tokens = ln_v.apply(edge.tokens);
    Tensor a = attn.apply(ln_q.apply(tap), refs, v);
    return add(tap, mul(gamma, a));
}

Tensor Extractor::apply(const Pyramid& edge, const Tensor& next_tap, long bh, long bw) const {
    Pyramid bb;
    bb.tokens = ln_v.apply(next_tap);
    bb.levels = {{bh, bw}};
    bb.offsets = {0, bh * bw};
    Tensor refs = grid_reference_points(edge.levels);
    Tensor a = attn.apply(ln_q.apply(edge.tokens), refs, bb);

    // conv-FFN: expand, depthwise 3x3 on each level's restored layout, gelu,
    // project back
    Tensor t = fc1.apply(a);
    long hidden = t.dim(1);
    std::vector<Tensor> parts;
    for (long l = 0; l < edge.count(); ++l) {
        Tensor rows = slice(t, 0, edge.offsets[l], edge.levels[l].count());
        Tensor plane = reshape(transpose(rows), {hidden, edge.levels[l].h, edge.levels[l].w});
        plane = depthwise_conv2d(plane, dw_w, dw_b, 1, 1);
        parts.push_back(plane_to_tokens(plane));
    }
    Tensor mixed = parts.size() == 1 ? parts[0] : concat(parts, 0);
    Tensor outf = fc2.apply(gelu(mixed));
    return add(edge.tokens, outf);
}

FusionStack::FusionStack(ParamStore& ps, long cb, long d, long heads, long points)
    : cb_(cb), d_(d) {
    for (int i = 0; i < 4; ++i) {
        std::string pi = "fusion.inj" + std::to_string(i);
        Injector in;
        in.ln_q = make_layer_norm(ps, pi + ".ln_q", cb);
        in.ln_v = make_layer_norm(ps, pi + ".ln_v", d);
        in.attn = make_deform_attn(ps, pi + ".attn", cb, d, heads, points, 3);
        in.gamma = ps.get(pi + ".gamma", {cb}, Init::Zeros);
        inj_.push_back(std::move(in));

        std::string pe = "fusion.ext" + std::to_string(i);
        Extractor ex;
        ex.ln_q = make_layer_norm(ps, pe + ".ln_q", d);
        ex.ln_v = make_layer_norm(ps, pe + ".ln_v", cb);
        ex.attn = make_deform_attn(ps, pe + ".attn", d, cb, heads, points, 1);
        ex.fc1 = make_linear(ps, pe + ".fc1", d, d);
        ex.dw_w = ps.get(pe + ".dw_w", {d, 3, 3}, Init::Kaiming);
        ex.dw_b = ps.get(pe + ".dw_b", {d}, Init::Zeros);
        ex.fc2 = make_linear(ps, pe + ".fc2", d, d);
        ext_.push_back(std::move(ex));

        tap_proj_.push_back(make_linear(ps, "fusion.tap" + std::to_string(i), cb, d));
    }
}

Pyramid FusionStack::apply(const std::vector<Tensor>& taps, long bh, long bw,
                           const EdgeFeatures& ef) const {
    if (taps.size() != 4) throw std::invalid_argument("FusionStack: expected 4 taps");
    Tensor bb_refs = grid_reference_points({{bh, bw}});

    Pyramid edge = ef.pyramid;
    std::vector<Tensor> injected;
    for (int i = 0; i < 4; ++i) {
        injected.push_back(inj_[i].apply(taps[i], bb_refs, edge));
        const Tensor& next = taps[std::min(i + 1, 3)];
        edge.tokens = ext_[i].apply(edge, next, bh, bw);
    }

    // assembly: tap s resized to scale s and summed with the matching source
    std::vector<LevelSpec> out_specs = {{ef.stem.dim(1), ef.stem.dim(2)}, edge.levels[0],
                                        edge.levels[1], edge.levels[2]};
    std::vector<Tensor> out_toks;
    for (int s = 0; s < 4; ++s) {
        Tensor tok = tap_proj_[s].apply(injected[s]);                 // [Nb, d]
        Tensor plane = reshape(transpose(tok), {d_, bh, bw});
        plane = resize_bilinear(plane, out_specs[s].h, out_specs[s].w);
        Tensor base = s == 0 ? ef.stem : edge.level_plane(s - 1);
        plane = add(plane, base);
        out_toks.push_back(plane_to_tokens(plane));
    }
    return make_pyramid(out_toks, out_specs);
}

}  // namespace focus
