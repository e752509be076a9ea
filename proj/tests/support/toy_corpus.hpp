#pragma once

#include <cstdint>
#include <vector>

#include "netssm/pcap.hpp"

namespace toy {

// Scripted 20-packet TCP flow: 3-way handshake, 13 data packets of 16 B
// payload ping-ponging between client and server, FIN/ACK/FIN/ACK
// teardown. Only the client ISN's top byte and the client port's low
// byte vary between flows, so a small model can learn the script.
netssm::pcap::Trace make_flow(uint8_t isn_byte, uint8_t port_byte);

// n flows with identity bytes drawn from a 4x4 grid, seeded.
std::vector<netssm::pcap::Trace> make_flows(std::size_t n, uint64_t seed);

}  // namespace toy
