"""
Topics over one serial stream
=============================

Every message travels as a checksummed frame tagged with a topic id,
so one byte stream carries all of a robot's traffic. This demo
publishes a velocity command through an in-process broker, corrupts a
frame to show it being dropped, and tallies how many robots share a
150 Mbps access point.
"""
from herosim.protocol import messages
from herosim.protocol.broker import Broker, LoopbackLink
from herosim.protocol.budget import REFERENCE_TOPICS, fleet_capacity, per_robot_total, topic_bandwidth
from herosim.protocol.framing import FrameDecoder, encode_frame

broker = Broker()
robot, listener = LoopbackLink(broker), LoopbackLink(broker)
topic_id = broker.advertise("/cmd_vel")
listener.client.subscribe("/cmd_vel", topic_id)
robot.client.advertise("/cmd_vel", topic_id)
robot.client.publish("/cmd_vel", messages.pack_cmd_vel(0.05, 0.3))
for name, payload in listener.poll():
    if name != "/cmd_vel":
        continue  # broker acks
    print(f"listener got {name}: v, w = {messages.unpack_cmd_vel(payload)}")

frame = bytearray(encode_frame(topic_id, messages.pack_cmd_vel(0.05, 0.3)))
print(f"\nframe on the wire: {frame.hex(' ')}")
frame[9] ^= 0x10
decoder = FrameDecoder()
good = decoder.feed(bytes(frame) + encode_frame(topic_id, b"next"))
print(f"after one flipped bit: {len(good)} frame delivered, {decoder.stats.corrupted} dropped")

print("\ntopic          KBps")
for topic in REFERENCE_TOPICS:
    print(f"{topic.name:<14}{topic_bandwidth(topic):6.2f}")
total = per_robot_total(REFERENCE_TOPICS)
print(f"per robot     {total:6.2f}")
print(f"robots per access point: {fleet_capacity(total)}")
