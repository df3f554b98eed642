#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "dps/graph.hpp"
#include "dps/graph_io.hpp"
#include "dps/rng.hpp"
#include "test_helpers.hpp"

using namespace dps;

namespace {

LabeledGraph random_graph(RngStream& rng, int max_n, int feat_dim = 2) {
    LabeledGraph g;
    g.n = static_cast<int>(rng.uniform_int(1, max_n));
    g.feat_dim = feat_dim;
    g.y = static_cast<int>(rng.uniform_int(0, 2));
    for (int u = 0; u < g.n; ++u)
        for (int v = u + 1; v < g.n; ++v)
            if (rng.bernoulli(0.35)) g.edges.push_back({u, v});
    for (int i = 0; i < g.n * feat_dim; ++i) g.x.push_back(rng.uniform(-1.0, 1.0));
    return g;
}

}  // namespace

TEST_CASE("normalize_adjacency closed forms") {
    SECTION("isolated single node") {
        LabeledGraph g;
        g.n = 1;
        g.feat_dim = 1;
        g.x = {0.0};
        Tensor ahat = normalize_adjacency(g);
        REQUIRE(ahat.shape() == std::vector<std::size_t>{1, 1});
        CHECK(ahat.at(0, 0) == Approx(1.0).margin(1e-12));
    }
    SECTION("two nodes, one edge: all entries 0.5") {
        Tensor a = adjacency_tensor(2, {{0, 1}});
        Tensor ahat = normalize_adjacency(a);
        for (double v : ahat.data()) CHECK(v == Approx(0.5).margin(1e-12));
    }
    SECTION("triangle: all entries 1/3") {
        Tensor a = adjacency_tensor(3, {{0, 1}, {1, 2}, {0, 2}});
        Tensor ahat = normalize_adjacency(a);
        for (double v : ahat.data()) CHECK(v == Approx(1.0 / 3.0).margin(1e-12));
    }
    SECTION("asymmetric input rejected") {
        Tensor a = Tensor::zeros({2, 2});
        a.mutable_data()[1] = 1.0;  // (0,1) set, (1,0) not
        CHECK_THROWS_AS(normalize_adjacency(a), std::invalid_argument);
    }
    SECTION("nonzero diagonal rejected") {
        Tensor a = Tensor::zeros({2, 2});
        a.mutable_data()[0] = 1.0;
        CHECK_THROWS_AS(normalize_adjacency(a), std::invalid_argument);
    }
}

TEST_CASE("normalize_adjacency is permutation-equivariant") {
    RngStream rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        LabeledGraph g = random_graph(rng, 9);
        const std::size_t n = static_cast<std::size_t>(g.n);
        std::vector<int> perm(n);
        for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
        rng.shuffle(perm);

        Tensor ahat = normalize_adjacency(adjacency_tensor(g));
        // P A P^T via index remap, then normalize
        std::vector<std::array<int, 2>> pedges;
        for (const auto& e : g.edges) {
            const int u = perm[static_cast<std::size_t>(e[0])];
            const int v = perm[static_cast<std::size_t>(e[1])];
            pedges.push_back({std::min(u, v), std::max(u, v)});
        }
        Tensor ahat_p = normalize_adjacency(adjacency_tensor(g.n, pedges));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                CHECK(ahat_p.at(static_cast<std::size_t>(perm[i]),
                                static_cast<std::size_t>(perm[j])) ==
                      Approx(ahat.at(i, j)).margin(1e-12));
    }
}

TEST_CASE("ego_graph") {
    NodeDataset ds;
    ds.n = 7;
    // 0 isolated; star 1-(2,3,4); path 4-5-6 hangs off the star leaf
    ds.edges = {{1, 2}, {1, 3}, {1, 4}, {4, 5}, {5, 6}};
    ds.feat_dim = 1;
    for (int i = 0; i < ds.n; ++i) {
        ds.x.push_back(static_cast<double>(i));
        ds.labels.push_back(i % 2);
        ds.split.push_back(Split::train);
        ds.domain.push_back(0);
    }

    SECTION("isolated node, k=1: singleton") {
        LabeledGraph g = ego_graph(ds, 0, 1);
        CHECK(g.n == 1);
        CHECK(g.edges.empty());
        CHECK(g.center == 0);
        CHECK(g.y == 0);
        CHECK(g.x == std::vector<double>{0.0});
    }
    SECTION("star center, k=1: entire star") {
        LabeledGraph g = ego_graph(ds, 1, 1);
        CHECK(g.n == 4);  // 1,2,3,4
        CHECK(g.edges.size() == 3);
        CHECK(g.center == 0);  // node 1 is smallest kept index
    }
    SECTION("middle of a path, k=1: 3-node path") {
        LabeledGraph g = ego_graph(ds, 5, 1);
        CHECK(g.n == 3);  // 4,5,6
        REQUIRE(g.edges.size() == 2);
        CHECK(g.center == 1);
        CHECK(g.y == 1);
    }
    SECTION("out-of-range center rejected") {
        CHECK_THROWS_AS(ego_graph(ds, 7, 1), std::invalid_argument);
        CHECK_THROWS_AS(ego_graph(ds, -1, 1), std::invalid_argument);
        CHECK_THROWS_AS(ego_graph(ds, 0, 0), std::invalid_argument);
    }
}

TEST_CASE("ego_graph node set equals brute-force BFS frontier union") {
    RngStream rng(47);
    for (int trial = 0; trial < 15; ++trial) {
        NodeDataset ds;
        ds.n = static_cast<int>(rng.uniform_int(1, 30));
        for (int u = 0; u < ds.n; ++u)
            for (int v = u + 1; v < ds.n; ++v)
                if (rng.bernoulli(0.12)) ds.edges.push_back({u, v});
        ds.feat_dim = 1;
        for (int i = 0; i < ds.n; ++i) {
            ds.x.push_back(0.0);
            ds.labels.push_back(0);
            ds.split.push_back(Split::train);
            ds.domain.push_back(0);
        }
        const int k = static_cast<int>(rng.uniform_int(1, 3));
        for (int v = 0; v < ds.n; ++v) {
            // oracle: frontier expansion on the dense adjacency matrix
            std::set<int> reach = {v};
            for (int hop = 0; hop < k; ++hop) {
                std::set<int> next = reach;
                for (int u : reach)
                    for (const auto& e : ds.edges) {
                        if (e[0] == u) next.insert(e[1]);
                        if (e[1] == u) next.insert(e[0]);
                    }
                reach = next;
            }
            LabeledGraph g = ego_graph(ds, v, k);
            CHECK(static_cast<std::size_t>(g.n) == reach.size());
        }
    }
}

TEST_CASE("apply_node_mask") {
    LabeledGraph g;
    g.n = 2;
    g.feat_dim = 2;
    g.x = {1.0, 2.0, 3.0, 4.0};
    g.edges = {{0, 1}};

    SECTION("all-ones mask is identity") {
        Mask m{Mask::Kind::node, Tensor::from({2}, {1.0, 1.0})};
        Tensor xp = apply_node_mask(g, m);
        CHECK(xp.data() == g.x);
    }
    SECTION("all-zeros mask annihilates") {
        Mask m{Mask::Kind::node, Tensor::from({2}, {0.0, 0.0})};
        Tensor xp = apply_node_mask(g, m);
        for (double v : xp.data()) CHECK(v == 0.0);
    }
    SECTION("fractional mask scales rows") {
        Mask m{Mask::Kind::node, Tensor::from({2}, {1.0, 0.5})};
        Tensor xp = apply_node_mask(g, m);
        CHECK(xp.at(0, 0) == 1.0);
        CHECK(xp.at(0, 1) == 2.0);
        CHECK(xp.at(1, 0) == 1.5);
        CHECK(xp.at(1, 1) == 2.0);
    }
    SECTION("length mismatch rejected") {
        Mask m{Mask::Kind::node, Tensor::from({3}, {1.0, 1.0, 1.0})};
        CHECK_THROWS_AS(apply_node_mask(g, m), std::invalid_argument);
    }
}

TEST_CASE("apply_edge_mask") {
    NodeDataset ds;
    ds.n = 3;
    ds.edges = {{0, 1}, {0, 2}, {1, 2}};
    ds.feat_dim = 1;
    for (int i = 0; i < 3; ++i) {
        ds.x.push_back(1.0);
        ds.labels.push_back(0);
        ds.split.push_back(Split::train);
        ds.domain.push_back(0);
    }

    SECTION("all-ones mask reproduces A") {
        Mask m{Mask::Kind::edge, Tensor::from({3}, {1.0, 1.0, 1.0})};
        Tensor ap = apply_edge_mask(ds, m);
        Tensor a = adjacency_tensor(ds.n, ds.edges);
        CHECK(ap.data() == a.data());
    }
    SECTION("dropping the only edge of a 2-node graph isolates both nodes") {
        NodeDataset two;
        two.n = 2;
        two.edges = {{0, 1}};
        two.feat_dim = 1;
        two.x = {1.0, 1.0};
        two.labels = {0, 0};
        two.split = {Split::train, Split::train};
        two.domain = {0, 0};
        Mask m{Mask::Kind::edge, Tensor::from({1}, {0.0})};
        Tensor ahat = normalize_adjacency(apply_edge_mask(two, m));
        CHECK(ahat.at(0, 0) == Approx(1.0).margin(1e-12));
        CHECK(ahat.at(1, 1) == Approx(1.0).margin(1e-12));
        CHECK(ahat.at(0, 1) == Approx(0.0).margin(1e-12));
        CHECK(ahat.at(1, 0) == Approx(0.0).margin(1e-12));
    }
    SECTION("half-weight edge on a triangle matches hand renormalization") {
        Mask m{Mask::Kind::edge, Tensor::from({3}, {0.5, 1.0, 1.0})};  // (0,1) at 0.5
        Tensor ahat = normalize_adjacency(apply_edge_mask(ds, m));
        const double d0 = 1.0 + 0.5 + 1.0, d1 = d0, d2 = 3.0;
        CHECK(ahat.at(0, 1) == Approx(0.5 / std::sqrt(d0 * d1)).margin(1e-12));
        CHECK(ahat.at(0, 2) == Approx(1.0 / std::sqrt(d0 * d2)).margin(1e-12));
        CHECK(ahat.at(1, 2) == Approx(1.0 / std::sqrt(d1 * d2)).margin(1e-12));
        CHECK(ahat.at(0, 0) == Approx(1.0 / d0).margin(1e-12));
        CHECK(ahat.at(2, 2) == Approx(1.0 / d2).margin(1e-12));
    }
    SECTION("length mismatch rejected") {
        Mask m{Mask::Kind::edge, Tensor::from({2}, {1.0, 1.0})};
        CHECK_THROWS_AS(apply_edge_mask(ds, m), std::invalid_argument);
    }
}

TEST_CASE("graph file round-trip") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "dps_graph_io_test";
    fs::create_directories(dir);
    const std::string path = (dir / "graphs.jsonl").string();

    SECTION("write then read is lossless") {
        RngStream rng(7);
        std::vector<LabeledGraph> graphs;
        for (int i = 0; i < 20; ++i) {
            LabeledGraph g = random_graph(rng, 8, 3);
            g.domain = i % 3;
            graphs.push_back(g);
        }
        write_graphs(graphs, path);
        auto back = read_graphs(path);
        REQUIRE(back.size() == graphs.size());
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            CHECK(back[i].n == graphs[i].n);
            CHECK(back[i].edges == graphs[i].edges);
            CHECK(back[i].x == graphs[i].x);
            CHECK(back[i].y == graphs[i].y);
            CHECK(back[i].domain == graphs[i].domain);
        }
    }
    SECTION("empty file reads as empty dataset") {
        std::ofstream(path).close();
        CHECK(read_graphs(path).empty());
    }
    SECTION("edge out of range names the record") {
        std::ofstream out(path);
        out << R"({"n":2,"edges":[[0,1]],"x":[[0.0],[0.0]],"y":0})" << "\n";
        out << R"({"n":2,"edges":[[0,5]],"x":[[0.0],[0.0]],"y":0})" << "\n";
        out.close();
        try {
            read_graphs(path);
            FAIL("expected throw");
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find(":2") != std::string::npos);  // line number
            CHECK(msg.find("out of range") != std::string::npos);
        }
    }
    SECTION("node dataset round-trip") {
        NodeDataset ds;
        ds.n = 4;
        ds.edges = {{0, 1}, {2, 3}};
        ds.feat_dim = 2;
        ds.x = {1, 2, 3, 4, 5, 6, 7, 8};
        ds.labels = {0, 1, 0, 1};
        ds.split = {Split::train, Split::train, Split::val, Split::test};
        ds.domain = {0, 0, 1, 2};
        const std::string npath = (dir / "nodes.json").string();
        write_node_dataset(ds, npath);
        NodeDataset back = read_node_dataset(npath);
        CHECK(back.n == ds.n);
        CHECK(back.edges == ds.edges);
        CHECK(back.x == ds.x);
        CHECK(back.labels == ds.labels);
        CHECK(back.split == ds.split);
        CHECK(back.domain == ds.domain);
    }
    fs::remove_all(dir);
}

TEST_CASE("masked normalization stays differentiable") {
    // gradient of a summary of Ahat(m * A) w.r.t. the edge mask
    NodeDataset ds;
    ds.n = 4;
    ds.edges = {{0, 1}, {1, 2}, {2, 3}, {0, 3}};
    ds.feat_dim = 1;
    ds.x = {1, 1, 1, 1};
    ds.labels = {0, 0, 0, 0};
    ds.split.assign(4, Split::train);
    ds.domain.assign(4, 0);

    std::vector<Tensor> params = {Tensor::from({4}, {0.9, 0.4, 0.7, 0.6})};
    auto loss = [&] {
        Mask m{Mask::Kind::edge, params[0]};
        return sum(square(normalize_adjacency(apply_edge_mask(ds, m))));
    };
    CHECK(dps::testing::max_relative_grad_error(params, loss) <= 1e-4);
}
